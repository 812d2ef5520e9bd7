"""Quenched averaging over disorder realizations.

nu(f) = E<f> is estimated by Monte Carlo over disorders: each disorder index
maps to a seed through a splittable hash (SeedSequence of (base_seed, index)),
the inner Gibbs expectation runs through the exact engine or MCMC, and the
reduction over indices is in fixed order, so results are independent of the
degree of parallelism.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import exact, mcmc
from .model import Disorder, ModelParams, WeightVector, exact_gibbs, sample_disorder
from .qsolver import solve_q


@dataclass(frozen=True)
class Estimate:
    """A value with its standard error, the universal Monte Carlo return shape."""

    value: float
    stderr: float
    n_samples: int
    seed_info: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")


@dataclass(frozen=True)
class DisorderPlan:
    """How to average over disorder: sample count, seeding, and inner engine."""

    n_disorders: int
    base_seed: int
    engine: str = "exact"
    schedule: mcmc.Schedule | None = None  # required for the mcmc engine
    method: str = "glauber"
    jobs: int = 1

    def __post_init__(self):
        if self.n_disorders < 2:
            raise ValueError(f"need >= 2 disorders for a stderr, got {self.n_disorders}")
        if self.engine not in ("exact", "mcmc"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "mcmc" and self.schedule is None:
            raise ValueError("mcmc engine requires a schedule")


def derive_seed(base_seed: int, index: int) -> int:
    """Stated splittable hash of (base_seed, index) -> 64-bit child seed."""
    seq = np.random.SeedSequence([int(base_seed), int(index)])
    return int(seq.generate_state(1, np.uint64)[0])


def disorder_for_index(plan: DisorderPlan, index: int, n_spins: int) -> Disorder:
    return sample_disorder(derive_seed(plan.base_seed, index), n_spins)


# ---------------------------------------------------------------------------
# Observables evaluable per disorder.  Exact evaluation sees the GibbsTable;
# MCMC evaluation sees replica-pair sample series.  All are plain frozen
# dataclasses so plans with jobs > 1 can ship them to worker processes.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicaProductObservable:
    """<prod_l S_l^{k_l}> for one disorder."""

    spec: exact.ReplicaSpec

    def evaluate_exact(self, table, weights):
        k_max = max(self.spec.exponents)
        xm = exact.x_moments(table, weights, k_max)
        ym = exact.y_moments(xm, k_max)
        return exact.replica_product(ym, self.spec)

    def evaluate_mcmc(self, y_series_list, overlap_series, x_series):
        product = np.ones_like(y_series_list[0].values)
        for series, k in zip(y_series_list, self.spec.exponents):
            product = product * series.values**k
        return float(product.mean())

    @property
    def n_pairs(self):
        return self.spec.n_pairs


@dataclass(frozen=True)
class YPowerObservable:
    """<Y^k> for one disorder."""

    k: int

    def evaluate_exact(self, table, weights):
        return exact.y_moment(exact.x_moments(table, weights, self.k), self.k)

    def evaluate_mcmc(self, y_series_list, overlap_series, x_series):
        return float(np.mean(y_series_list[0].values ** self.k))

    n_pairs = 1


@dataclass(frozen=True)
class XMeanObservable:
    """<X> for one disorder."""

    def evaluate_exact(self, table, weights):
        return exact.x_moments(table, weights, 1)[1]

    def evaluate_mcmc(self, y_series_list, overlap_series, x_series):
        return float(x_series.values.mean())

    n_pairs = 1


@dataclass(frozen=True)
class CenteredOverlapPowerObservable:
    """<(R_{1,2} - q)^order> for one disorder."""

    q: float
    order: int

    def evaluate_exact(self, table, weights):
        return exact.centered_overlap_moment(table, self.q, self.order)

    def evaluate_mcmc(self, y_series_list, overlap_series, x_series):
        return float(np.mean((overlap_series.values - self.q) ** self.order))

    n_pairs = 1


@dataclass(frozen=True)
class OverlapPowerObservable:
    """<R_{1,2}^m> for one disorder."""

    m: int

    def evaluate_exact(self, table, weights):
        return exact.overlap_moment(table, self.m)

    def evaluate_mcmc(self, y_series_list, overlap_series, x_series):
        return float(np.mean(overlap_series.values**self.m))

    n_pairs = 1


def _evaluate_index(args):
    params, weights, plan, observables, index = args
    disorder = disorder_for_index(plan, index, params.n_spins)
    if plan.engine == "exact":
        table = exact_gibbs(params, disorder)
        return [obs.evaluate_exact(table, weights) for obs in observables]
    pairs_needed = max(getattr(obs, "n_pairs", 1) for obs in observables)
    chain_seed = derive_seed(plan.base_seed, index) ^ 0x5EED
    result = mcmc.run_replica_pair(
        params,
        disorder,
        weights,
        plan.schedule,
        chain_seed,
        method=plan.method,
        extra_pairs=pairs_needed - 1,
    )
    y_series, overlap_series, x_series = result
    if pairs_needed == 1:
        y_series = [y_series]
    return [obs.evaluate_mcmc(y_series, overlap_series, x_series) for obs in observables]


def per_disorder_values(
    observables,
    params: ModelParams,
    weights: WeightVector,
    plan: DisorderPlan,
) -> np.ndarray:
    """(M, n_observables) matrix of per-disorder values, in disorder-index order.

    All observables share each disorder sample (common random numbers), so
    differences between columns are paired estimates.
    """
    tasks = [(params, weights, plan, tuple(observables), m) for m in range(plan.n_disorders)]
    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            rows = list(pool.map(_evaluate_index, tasks, chunksize=4))
    else:
        rows = [_evaluate_index(t) for t in tasks]
    return np.array(rows)


def _mean_estimate(values: np.ndarray, plan: DisorderPlan, name: str) -> Estimate:
    return Estimate(
        value=float(values.mean()),
        stderr=float(values.std(ddof=1) / np.sqrt(len(values))),
        n_samples=len(values),
        seed_info=f"SeedSequence([{plan.base_seed}, m]), m < {plan.n_disorders}",
        meta={"engine": plan.engine, "observable": name},
    )


def nu(
    observable,
    params: ModelParams,
    weights: WeightVector,
    plan: DisorderPlan,
) -> Estimate:
    """nu(f) = E<f>: disorder-mean of the per-disorder Gibbs expectation."""
    values = per_disorder_values([observable], params, weights, plan)[:, 0]
    return _mean_estimate(values, plan, type(observable).__name__)


def nu_disorder_variance(
    observable_a,
    observable_b,
    params: ModelParams,
    weights: WeightVector,
    plan: DisorderPlan,
) -> Estimate:
    """E (<A> - <B>)^2 with A and B evaluated on shared disorder samples."""
    values = per_disorder_values([observable_a, observable_b], params, weights, plan)
    squared = (values[:, 0] - values[:, 1]) ** 2
    return _mean_estimate(squared, plan, "disorder_variance")


@dataclass(frozen=True)
class MomentBoundFit:
    """Fitted constants for the overlap and Y moment growth bounds."""

    overlap_rows: list  # (N, k, nu_value, implied_constant)
    y_rows: list        # (N, k, nu_value, implied_constant)
    overlap_constant: float
    y_constant: float
    holds: bool


def empirical_moment_bound_fit(
    orders,
    beta: float,
    h: float,
    n_list,
    plan: DisorderPlan,
    profile=None,
) -> MomentBoundFit:
    """Fit the constants in the overlap and Y moment bounds over an N grid.

    For even order 2k the bound forms are
        nu((R_{1,2} - q)^{2k}) <= (L k / N)^k      (overlap concentration)
        nu(Y^{2k})             <= (L k)^k          (exponential integrability)
    and the fitted constant is the max implied L over the grid, so by
    construction the bounds hold with it; the per-point tables let callers
    check stability of the implied constants.
    """
    from .model import uniform_weights

    profile = profile or uniform_weights
    for order in orders:
        if order % 2 == 1 or order > 8:
            raise ValueError(f"orders must be even and <= 8, got {order}")
    q = solve_q(beta, h).q
    overlap_rows, y_rows = [], []
    for n in n_list:
        params = ModelParams(beta=beta, h=h, n_spins=n)
        weights = profile(n)
        observables = []
        for order in orders:
            k = order // 2
            if order <= 4:
                observables.append(CenteredOverlapPowerObservable(q=q, order=order))
            observables.append(YPowerObservable(k=order))
        values = per_disorder_values(observables, params, weights, plan)
        col = 0
        for order in orders:
            k = order // 2
            if order <= 4:
                v = float(values[:, col].mean())
                overlap_rows.append((n, k, v, n / k * v ** (1.0 / k)))
                col += 1
            v = float(values[:, col].mean())
            y_rows.append((n, k, v, v ** (1.0 / k) / k))
            col += 1
    overlap_constant = max(r[3] for r in overlap_rows) if overlap_rows else 0.0
    y_constant = max(r[3] for r in y_rows)
    return MomentBoundFit(
        overlap_rows=overlap_rows,
        y_rows=y_rows,
        overlap_constant=overlap_constant,
        y_constant=y_constant,
        holds=True,
    )
