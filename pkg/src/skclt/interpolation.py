"""Smart-path interpolation with one or two cavity coordinates.

The interpolated Hamiltonian decouples the last spin (one-coordinate path)
or the last two spins (two-coordinate path) at t = 0 and recovers the full
model at t = 1.  The inner Gibbs expectation is exact enumeration; the outer
expectation over couplings and the cavity Gaussians is either a full tensor
Gauss-Hermite quadrature (small N) or Monte Carlo over couplings with a
z-quadrature, with per-sample seeds derived deterministically.

Replica observables are represented as products of factors, each factor an
array over configurations of one replica or over configuration pairs of two
replicas.  That keeps every expectation a small tensor contraction and keeps
the analytic derivative formulas (which extend the observable by one or two
fresh replicas) mechanical.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .disorder import Estimate, derive_seed
from .model import (
    Disorder,
    ModelParams,
    WeightVector,
    energy,
    spin_matrix,
)
from .qsolver import standard_normal_nodes

MAX_ARITY = 6
FD_STEP = 1e-3


# ---------------------------------------------------------------------------
# Path Hamiltonians for a single configuration.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathPoint:
    """Position t along the path plus the frozen cavity Gaussians."""

    t: float
    cavity: tuple  # (z,) for one coordinate, (z1, z2) for two
    q: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"t must be in [0, 1], got {self.t}")


def path_energy_1(
    point: PathPoint, params: ModelParams, disorder: Disorder, spins
) -> float:
    """Exponent of the one-coordinate interpolated Gibbs weight.

    At t = 1 this is the unmodified model exponent, evaluated through the
    same code path so the identity holds bit for bit.
    """
    if point.t == 1.0:
        return energy(params, disorder, spins)
    spins = np.asarray(spins, dtype=float)
    n = params.n_spins
    if spins.shape != (n,):
        raise ValueError(f"expected {n} spins, got shape {spins.shape}")
    g = disorder.upper_matrix()
    scale = params.beta / np.sqrt(n)
    inner = float(spins[:-1] @ (g[:-1, :-1] @ spins[:-1]))
    cavity_sum = float(g[:-1, -1] @ spins[:-1])
    (z,) = point.cavity
    return (
        scale * inner
        + np.sqrt(point.t) * spins[-1] * scale * cavity_sum
        + params.beta * np.sqrt(1.0 - point.t) * z * np.sqrt(point.q) * spins[-1]
        + params.h * float(spins.sum())
    )


def path_energy_2(
    point: PathPoint, params: ModelParams, disorder: Disorder, spins
) -> float:
    """Exponent of the two-coordinate interpolated Gibbs weight."""
    if point.t == 1.0:
        return energy(params, disorder, spins)
    spins = np.asarray(spins, dtype=float)
    n = params.n_spins
    if spins.shape != (n,):
        raise ValueError(f"expected {n} spins, got shape {spins.shape}")
    g = disorder.upper_matrix()
    scale = params.beta / np.sqrt(n)
    inner = float(spins[:-2] @ (g[:-2, :-2] @ spins[:-2]))
    cavity_last = float(g[:-2, -1] @ spins[:-2])
    cavity_second = float(g[:-2, -2] @ spins[:-2])
    z1, z2 = point.cavity
    sq = np.sqrt(point.q)
    return (
        scale * inner
        + np.sqrt(point.t)
        * (
            spins[-1] * scale * cavity_last
            + spins[-2] * scale * cavity_second
            + scale * g[-2, -1] * spins[-2] * spins[-1]
        )
        + params.beta * np.sqrt(1.0 - point.t) * (z1 * sq * spins[-1] + z2 * sq * spins[-2])
        + params.h * float(spins.sum())
    )


# ---------------------------------------------------------------------------
# Observables as factor products.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """One multiplicative piece of an observable.

    values has shape (2**N,) when replicas has one entry and (2**N, 2**N)
    when it couples two replicas.
    """

    replicas: tuple
    values: np.ndarray


class ExpectationContext:
    """Configuration-space arrays shared by all observables at one (N, weights, q)."""

    def __init__(self, n_spins: int, weights: WeightVector, q: float):
        if weights.n_spins != n_spins:
            raise ValueError("weights do not match n_spins")
        self.n_spins = n_spins
        self.weights = weights
        self.q = q

    @cached_property
    def spins(self):
        return spin_matrix(self.n_spins)

    @cached_property
    def x_values(self):
        return self.spins @ self.weights.weights

    def site(self, index: int) -> np.ndarray:
        return self.spins[:, index]

    def _overlap(self, keep: int) -> np.ndarray:
        s = self.spins[:, :keep]
        return (s @ s.T) / self.n_spins

    @cached_property
    def overlap_full(self):
        return self._overlap(self.n_spins)

    @cached_property
    def overlap_drop_last(self):
        return self._overlap(self.n_spins - 1)

    @cached_property
    def overlap_drop_two(self):
        return self._overlap(self.n_spins - 2)


@dataclass(frozen=True)
class Observable:
    """Named product observable; build() materializes its factors."""

    name: str
    arity: int
    build: callable

    def factors(self, ctx: ExpectationContext) -> tuple:
        return tuple(self.build(ctx))


def _sbar_pair(ctx, site_a, site_b):
    sa, sb = ctx.site(site_a), ctx.site(site_b)
    return (sa[:, None] - sa[None, :]) * (sb[:, None] - sb[None, :])


def _sym_avg_pow(ctx, k):
    x = ctx.x_values
    return (x[:, None] - x[None, :]) ** k


OBSERVABLES = {
    "one": Observable("one", 1, lambda ctx: []),
    "last_site": Observable("last_site", 1, lambda ctx: [Factor((0,), ctx.site(-1))]),
    "last_two_sites": Observable(
        "last_two_sites",
        1,
        lambda ctx: [Factor((0,), ctx.site(-1)), Factor((0,), ctx.site(-2))],
    ),
    "last_site_pair": Observable(
        "last_site_pair",
        2,
        lambda ctx: [Factor((0,), ctx.site(-1)), Factor((1,), ctx.site(-1))],
    ),
    "first_site_pair": Observable(
        "first_site_pair",
        2,
        lambda ctx: [Factor((0,), ctx.site(0)), Factor((1,), ctx.site(0))],
    ),
    "sbar_last_sbar_first": Observable(
        "sbar_last_sbar_first", 2, lambda ctx: [Factor((0, 1), _sbar_pair(ctx, -1, 0))]
    ),
    "sbar_last_sq": Observable(
        "sbar_last_sq", 2, lambda ctx: [Factor((0, 1), _sbar_pair(ctx, -1, -1))]
    ),
    "sym_avg_sq": Observable(
        "sym_avg_sq", 2, lambda ctx: [Factor((0, 1), _sym_avg_pow(ctx, 2))]
    ),
    "overlap": Observable(
        "overlap", 2, lambda ctx: [Factor((0, 1), ctx.overlap_full)]
    ),
    "overlap_centered_sq": Observable(
        "overlap_centered_sq",
        2,
        lambda ctx: [Factor((0, 1), (ctx.overlap_full - ctx.q) ** 2)],
    ),
    "overlap_eq_centered_sq": Observable(
        "overlap_eq_centered_sq",
        2,
        lambda ctx: [Factor((0, 1), (ctx.overlap_drop_two - ctx.q) ** 2)],
    ),
    "sym_avg_sq_pair": Observable(
        "sym_avg_sq_pair",
        4,
        lambda ctx: [
            Factor((0, 1), _sym_avg_pow(ctx, 2)),
            Factor((2, 3), _sym_avg_pow(ctx, 2)),
        ],
    ),
}

# Catalog used by the derivative-identity checks: arity <= 4 and nontrivial.
DERIVATIVE_CATALOG = (
    "one",
    "last_site",
    "last_two_sites",
    "last_site_pair",
    "first_site_pair",
    "sbar_last_sbar_first",
    "sym_avg_sq",
    "overlap",
    "overlap_centered_sq",
    "sym_avg_sq_pair",
)

_LETTERS = "abcdefgh"


def batched_expectation(probs: np.ndarray, factors) -> np.ndarray:
    """<prod factors> under the product measure, for a batch of tables.

    probs has shape (batch, 2**N); replicas absent from every factor
    integrate to one and are dropped from the contraction.
    """
    if not factors:
        return np.ones(probs.shape[0])
    used = sorted({r for f in factors for r in f.replicas})
    mapping = {r: _LETTERS[i] for i, r in enumerate(used)}
    subscripts = ["x" + mapping[r] for r in used]
    operands = [probs] * len(used)
    for f in factors:
        subscripts.append("".join(mapping[r] for r in f.replicas))
        operands.append(f.values)
    expr = ",".join(subscripts) + "->x"
    return np.einsum(expr, *operands, optimize=True)


def squared_factors(factors) -> tuple:
    """Factors of f**2 for a product observable f."""
    return tuple(Factor(f.replicas, f.values**2) for f in factors)


# ---------------------------------------------------------------------------
# Interpolated Gibbs tables for batches of outer points.
# ---------------------------------------------------------------------------


class _PathGeometry:
    """Feature arrays of one (params, path) pair, shared across outer points."""

    def __init__(self, params: ModelParams, path: int):
        if path not in (1, 2):
            raise ValueError(f"path must be 1 or 2, got {path}")
        n = params.n_spins
        if path == 2 and n < 2:
            raise ValueError("two-coordinate path needs N >= 2")
        self.params = params
        self.path = path
        self.n_spins = n
        s = spin_matrix(n)
        rows, cols = np.triu_indices(n, k=1)
        # Row-major pair order matches Disorder.couplings.
        self.pair_features = (s[:, rows] * s[:, cols]).T
        cavity_sites = {n - 1} if path == 1 else {n - 2, n - 1}
        self.cavity_mask = np.array(
            [(i in cavity_sites) or (j in cavity_sites) for i, j in zip(rows, cols)]
        )
        if path == 1:
            self.z_features = s[:, [n - 1]].T
        else:
            self.z_features = s[:, [n - 1, n - 2]].T  # z1 couples sigma_N, z2 the next
        self.base = params.h * s.sum(axis=1)
        self.n_pairs = len(rows)

    @property
    def n_z(self):
        return self.path

    def probs(self, t: float, q: float, couplings: np.ndarray, z: np.ndarray):
        """(batch, 2**N) interpolated Gibbs probabilities.

        couplings: (batch, n_pairs); z: (batch, n_z).
        """
        scale = self.params.beta / np.sqrt(self.n_spins)
        pair_coeff = np.where(self.cavity_mask, np.sqrt(t), 1.0) * scale
        z_coeff = self.params.beta * np.sqrt(1.0 - t) * np.sqrt(q)
        logw = (couplings * pair_coeff) @ self.pair_features
        logw += (z * z_coeff) @ self.z_features
        logw += self.base
        logw -= logw.max(axis=1, keepdims=True)
        p = np.exp(logw)
        p /= p.sum(axis=1, keepdims=True)
        return p


@dataclass(frozen=True)
class QuadraturePlan:
    """Full tensor Gauss-Hermite over every coupling and cavity Gaussian."""

    coupling_nodes: int = 16
    z_nodes: int = 16
    block_size: int = 1 << 17


@dataclass(frozen=True)
class MonteCarloPlan:
    """Couplings by seeded Monte Carlo, cavity Gaussians by quadrature."""

    n_disorders: int
    base_seed: int
    z_nodes: int = 16

    def __post_init__(self):
        if self.n_disorders < 2:
            raise ValueError("need >= 2 coupling samples for a stderr")


def _tensor_grid(node_counts):
    """Cartesian product of 1D Gauss-Hermite rules: points (B, d), weights (B,)."""
    points = np.zeros((1, 0))
    weights = np.ones(1)
    for count in node_counts:
        z, w = standard_normal_nodes(count)
        points = np.hstack(
            [np.repeat(points, count, axis=0), np.tile(z, len(weights))[:, None]]
        )
        weights = (weights[:, None] * w[None, :]).ravel()
    return points, weights


def _evaluate_requests(requests, params, weights, q, plan, path):
    """Evaluate (t, factors) requests under a shared outer-expectation plan.

    Returns (values, per_sample): quadrature plans give exact values and
    per_sample=None; Monte Carlo plans also give the (M, n_requests) matrix
    of per-coupling-sample values so callers can form paired differences.
    """
    geom = _PathGeometry(params, path)
    by_t = {}
    for idx, (t, factors) in enumerate(requests):
        by_t.setdefault(float(t), []).append(idx)

    if isinstance(plan, QuadraturePlan):
        if geom.n_pairs > 3:
            raise ValueError(
                "full tensor quadrature over couplings is limited to N <= 3"
            )
        node_counts = [plan.coupling_nodes] * geom.n_pairs + [plan.z_nodes] * geom.n_z
        points, point_weights = _tensor_grid(node_counts)
        values = np.zeros(len(requests))
        for start in range(0, len(point_weights), plan.block_size):
            stop = min(start + plan.block_size, len(point_weights))
            gm = points[start:stop, : geom.n_pairs]
            zm = points[start:stop, geom.n_pairs :]
            wm = point_weights[start:stop]
            for t, idxs in by_t.items():
                p = geom.probs(t, q, gm, zm)
                for idx in idxs:
                    values[idx] += float(
                        wm @ batched_expectation(p, requests[idx][1])
                    )
        return values, None

    if isinstance(plan, MonteCarloPlan):
        # z integrates out exactly at t = 1, so a single node suffices there.
        z_grid_full, wz_full = _tensor_grid([plan.z_nodes] * geom.n_z)
        z_grid_one, wz_one = np.zeros((1, geom.n_z)), np.ones(1)
        per_sample = np.empty((plan.n_disorders, len(requests)))
        for m in range(plan.n_disorders):
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(derive_seed(plan.base_seed, m)))
            )
            g_row = rng.standard_normal(geom.n_pairs)
            for t, idxs in by_t.items():
                z_grid, wz = (z_grid_one, wz_one) if t == 1.0 else (z_grid_full, wz_full)
                gm = np.broadcast_to(g_row, (len(wz), geom.n_pairs))
                p = geom.probs(t, q, gm, z_grid)
                for idx in idxs:
                    per_sample[m, idx] = float(
                        wz @ batched_expectation(p, requests[idx][1])
                    )
        return per_sample.mean(axis=0), per_sample

    raise TypeError(f"unknown plan type {type(plan).__name__}")


def _estimate_from(values, per_sample, column, plan) -> Estimate:
    if per_sample is None:
        return Estimate(value=float(values[column]), stderr=0.0, n_samples=1,
                        seed_info="tensor-quadrature")
    col = per_sample[:, column]
    m = len(col)
    return Estimate(
        value=float(col.mean()),
        stderr=float(col.std(ddof=1) / np.sqrt(m)),
        n_samples=m,
        seed_info=f"SeedSequence([{plan.base_seed}, m]), m < {m}",
    )


def interpolated_average(
    observable: Observable,
    t: float,
    params: ModelParams,
    weights: WeightVector,
    q: float,
    plan,
    path: int = 1,
) -> Estimate:
    """nu_t(f): outer expectation of the inner interpolated Gibbs average."""
    if observable.arity > MAX_ARITY:
        raise ValueError(f"arity {observable.arity} exceeds {MAX_ARITY}")
    ctx = ExpectationContext(params.n_spins, weights, q)
    values, per_sample = _evaluate_requests(
        [(t, observable.factors(ctx))], params, weights, q, plan, path
    )
    return _estimate_from(values, per_sample, 0, plan)


# ---------------------------------------------------------------------------
# Analytic path derivatives.
# ---------------------------------------------------------------------------


def _derivative_terms(obs_factors, arity, ctx, params, path, groups=None):
    """(coefficient, factors) terms of the analytic t-derivative, by group.

    Each group runs over the observable's replica pairs (weight +1), over
    each observable replica coupled to one fresh replica (weight -n), and
    over two fresh replicas (weight +n(n+1)/2), all times beta^2.  On the
    one-coordinate path the extension carries the last site's spins and the
    centered overlap over the first N-1 sites; the two-coordinate path has
    the analogous group for the second-to-last site, plus a third group
    where the overlap factor is replaced by that site's spin pair and the
    weight picks up 1/N.
    """
    n = arity
    beta_sq = params.beta**2
    overlap = ctx.overlap_drop_last if path == 1 else ctx.overlap_drop_two
    centered = overlap - ctx.q

    def build(l, lp, site_values, with_overlap):
        extra = [Factor((l,), site_values), Factor((lp,), site_values)]
        if with_overlap:
            extra.append(Factor((l, lp), centered))
        else:
            second = ctx.site(-2)
            extra.append(Factor((l,), second))
            extra.append(Factor((lp,), second))
        return tuple(obs_factors) + tuple(extra)

    def group(site_values, with_overlap, prefactor):
        terms = []
        for l in range(n):
            for lp in range(l + 1, n):
                terms.append(
                    (prefactor * beta_sq, build(l, lp, site_values, with_overlap))
                )
        for l in range(n):
            terms.append(
                (-prefactor * beta_sq * n, build(l, n, site_values, with_overlap))
            )
        terms.append(
            (
                prefactor * beta_sq * n * (n + 1) / 2,
                build(n, n + 1, site_values, with_overlap),
            )
        )
        return terms

    named = {}
    if path == 1:
        named["I"] = group(ctx.site(-1), True, 1.0)
        return named
    wanted = groups or ("I", "II", "III")
    if "I" in wanted:
        named["I"] = group(ctx.site(-1), True, 1.0)
    if "II" in wanted:
        named["II"] = group(ctx.site(-2), True, 1.0)
    if "III" in wanted:
        named["III"] = group(ctx.site(-1), False, 1.0 / params.n_spins)
    return named


@dataclass(frozen=True)
class DerivativeResult:
    total: Estimate
    components: dict  # group name -> Estimate


def _combine_linear(coeffs, values, per_sample, columns, plan) -> Estimate:
    """Estimate of sum_i coeffs[i] * term_i with paired per-sample errors."""
    coeffs = np.asarray(coeffs)
    value = float(coeffs @ values[columns])
    if per_sample is None:
        return Estimate(value=value, stderr=0.0, n_samples=1,
                        seed_info="tensor-quadrature")
    combo = per_sample[:, columns] @ coeffs
    m = len(combo)
    return Estimate(
        value=float(combo.mean()),
        stderr=float(combo.std(ddof=1) / np.sqrt(m)),
        n_samples=m,
        seed_info=f"SeedSequence([{plan.base_seed}, m]), m < {m}",
    )


def _path_derivative(observable, t, params, weights, q, plan, path, groups=None):
    if not 0.0 <= t < 1.0:
        raise ValueError(
            f"the derivative formula is stated for 0 <= t < 1, got t={t}"
        )
    if observable.arity > MAX_ARITY - 2:
        raise ValueError(
            f"derivative extends the observable by two replicas; arity "
            f"{observable.arity} exceeds {MAX_ARITY - 2}"
        )
    ctx = ExpectationContext(params.n_spins, weights, q)
    named = _derivative_terms(
        observable.factors(ctx), observable.arity, ctx, params, path, groups
    )
    requests, layout = [], {}
    for name, terms in named.items():
        cols = []
        for coeff, factors in terms:
            cols.append((coeff, len(requests)))
            requests.append((t, factors))
        layout[name] = cols
    values, per_sample = _evaluate_requests(requests, params, weights, q, plan, path)
    components = {}
    for name, cols in layout.items():
        coeffs = [c for c, _ in cols]
        columns = [i for _, i in cols]
        components[name] = _combine_linear(coeffs, values, per_sample, columns, plan)
    all_coeffs = [c for cols in layout.values() for c, _ in cols]
    all_columns = [i for cols in layout.values() for _, i in cols]
    total = _combine_linear(all_coeffs, values, per_sample, all_columns, plan)
    return DerivativeResult(total=total, components=components)


def path_derivative_one(
    observable: Observable,
    t: float,
    params: ModelParams,
    weights: WeightVector,
    q: float,
    plan,
) -> DerivativeResult:
    """Analytic d/dt of nu_t(f) along the one-coordinate path (t < 1)."""
    return _path_derivative(observable, t, params, weights, q, plan, path=1)


def path_derivative_two(
    observable: Observable,
    t: float,
    params: ModelParams,
    weights: WeightVector,
    q: float,
    plan,
    groups=None,
) -> DerivativeResult:
    """Analytic d/dt along the two-coordinate path; components I, II, III."""
    return _path_derivative(observable, t, params, weights, q, plan, path=2, groups=groups)


@dataclass(frozen=True)
class DerivativeCheck:
    """Finite-difference versus analytic derivative on shared outer points."""

    finite_difference: Estimate
    analytic: Estimate
    difference: Estimate
    richardson_gap: float  # |FD(step) - FD(step/2)|, truncation sanity


def derivative_check(
    observable: Observable,
    t: float,
    params: ModelParams,
    weights: WeightVector,
    q: float,
    plan,
    path: int = 1,
    step: float = FD_STEP,
    richardson: bool = True,
) -> DerivativeCheck:
    """Central finite difference of nu_t against the analytic formula.

    All evaluations share the plan's outer points, so under a Monte Carlo
    plan the difference is a paired estimate.  richardson=False skips the
    half-step truncation probe (then richardson_gap is NaN).
    """
    ctx = ExpectationContext(params.n_spins, weights, q)
    obs_factors = observable.factors(ctx)
    named = _derivative_terms(obs_factors, observable.arity, ctx, params, path)
    requests = [(t + step, obs_factors), (t - step, obs_factors)]
    if richardson:
        requests += [(t + step / 2, obs_factors), (t - step / 2, obs_factors)]
    coeffs, columns = [], []
    for terms in named.values():
        for coeff, factors in terms:
            coeffs.append(coeff)
            columns.append(len(requests))
            requests.append((t, factors))
    values, per_sample = _evaluate_requests(requests, params, weights, q, plan, path)

    fd_coeffs = [1.0 / (2 * step), -1.0 / (2 * step)]
    fd = _combine_linear(fd_coeffs, values, per_sample, [0, 1], plan)
    analytic = _combine_linear(coeffs, values, per_sample, columns, plan)
    diff = _combine_linear(
        fd_coeffs + [-c for c in coeffs],
        values,
        per_sample,
        [0, 1] + columns,
        plan,
    )
    if richardson:
        fd_half = _combine_linear(
            [1.0 / step, -1.0 / step], values, per_sample, [2, 3], plan
        )
        gap = abs(fd.value - fd_half.value)
    else:
        gap = float("nan")
    return DerivativeCheck(
        finite_difference=fd,
        analytic=analytic,
        difference=diff,
        richardson_gap=gap,
    )


# ---------------------------------------------------------------------------
# Taylor remainder scaling.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaylorRow:
    n_spins: int
    remainder: float
    remainder_stderr: float
    rms_observable: float  # nu(f^2)^(1/2)
    implied_constant: float


@dataclass(frozen=True)
class TaylorReport:
    order: int
    rows: list
    fitted_exponent: float  # slope of log remainder vs log N
    bound_constant: float   # max implied K over the grid


def taylor_remainder_report(
    observable_name: str,
    order: int,
    beta: float,
    h: float,
    n_list,
    plan_factory,
    q: float,
    path: int = 1,
    profile=None,
) -> TaylorReport:
    """Remainder of nu(f) minus its order-m expansion at t=0, over an N grid.

    plan_factory maps N to a MonteCarloPlan (or QuadraturePlan at N <= 3);
    every term at one N shares that plan's outer points, so the remainder is
    a paired estimate.  The implied constant divides the remainder by
    N^{-(m+1)/2} nu(f^2)^{1/2}.
    """
    from .model import uniform_weights

    if order not in (0, 1):
        raise ValueError(f"supported expansion orders are 0 and 1, got {order}")
    profile = profile or uniform_weights
    observable = OBSERVABLES[observable_name]
    rows = []
    for n in n_list:
        params = ModelParams(beta=beta, h=h, n_spins=n)
        weights = profile(n)
        plan = plan_factory(n)
        ctx = ExpectationContext(n, weights, q)
        obs_factors = observable.factors(ctx)
        requests = [
            (1.0, obs_factors),
            (0.0, obs_factors),
            (1.0, squared_factors(obs_factors)),
        ]
        coeffs, columns = [1.0, -1.0], [0, 1]
        if order >= 1:
            named = _derivative_terms(obs_factors, observable.arity, ctx, params, path)
            for terms in named.values():
                for coeff, factors in terms:
                    coeffs.append(-coeff)
                    columns.append(len(requests))
                    requests.append((0.0, factors))
        values, per_sample = _evaluate_requests(requests, params, weights, q, plan, path)
        remainder_est = _combine_linear(coeffs, values, per_sample, columns, plan)
        rms = float(np.sqrt(max(values[2], 0.0)))
        scale = n ** (-(order + 1) / 2) * rms
        rows.append(
            TaylorRow(
                n_spins=n,
                remainder=abs(remainder_est.value),
                remainder_stderr=remainder_est.stderr,
                rms_observable=rms,
                implied_constant=abs(remainder_est.value) / scale if scale > 0 else 0.0,
            )
        )
    log_n = np.log([r.n_spins for r in rows])
    log_r = np.log([max(r.remainder, 1e-300) for r in rows])
    exponent = float(np.polyfit(log_n, log_r, 1)[0])
    return TaylorReport(
        order=order,
        rows=rows,
        fitted_exponent=exponent,
        bound_constant=max(r.implied_constant for r in rows),
    )


# ---------------------------------------------------------------------------
# Restricted-overlap concentration at t = 0 of the two-coordinate path.
# ---------------------------------------------------------------------------


def _restricted_centered_overlap_sq(probs, spins, n_drop, q, n_spins):
    """<(R' - q)^2> where R' sums the first N - n_drop sites over N."""
    kept = spins[:, : spins.shape[1] - n_drop]
    b = probs @ kept
    corr = (kept * probs[:, None]).T @ kept
    r1 = float(b @ b) / n_spins
    r2 = float(np.sum(corr**2)) / n_spins**2
    return r2 - 2 * q * r1 + q * q


def restricted_overlap_concentration(
    params: ModelParams,
    weights: WeightVector,
    q: float,
    plan: MonteCarloPlan,
    t: float,
    path: int = 2,
) -> Estimate:
    """nu_t((R'' - q)^2) with R'' dropping the path's cavity coordinates.

    Uses correlator sums instead of configuration-pair matrices, so it stays
    cheap at N well beyond the pair-factor route.
    """
    geom = _PathGeometry(params, path)
    spins = spin_matrix(params.n_spins)
    z_grid, wz = _tensor_grid([plan.z_nodes] * geom.n_z)
    if t == 1.0:
        z_grid, wz = np.zeros((1, geom.n_z)), np.ones(1)
    out = np.empty(plan.n_disorders)
    for m in range(plan.n_disorders):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(derive_seed(plan.base_seed, m)))
        )
        g_row = rng.standard_normal(geom.n_pairs)
        gm = np.broadcast_to(g_row, (len(wz), geom.n_pairs))
        p = geom.probs(t, q, gm, z_grid)
        inner = [
            _restricted_centered_overlap_sq(p[b], spins, path, q, params.n_spins)
            for b in range(len(wz))
        ]
        out[m] = float(wz @ np.asarray(inner))
    return Estimate(
        value=float(out.mean()),
        stderr=float(out.std(ddof=1) / np.sqrt(len(out))),
        n_samples=len(out),
        seed_info=f"SeedSequence([{plan.base_seed}, m]), m < {plan.n_disorders}",
    )
