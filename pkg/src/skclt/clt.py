"""Headline quantities: moment-matching discrepancies, scaling sweeps, and
distributional diagnostics for the symmetrized weighted spin average."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import exact
from .disorder import (
    DisorderPlan,
    Estimate,
    ReplicaProductObservable,
    YPowerObservable,
    per_disorder_values,
)
from .model import (
    HIGH_TEMP_CEILING,
    CapacityError,
    Disorder,
    ModelParams,
    WeightVector,
    exact_gibbs,
    one_hot_weights,
    power_law_weights,
    uniform_weights,
)


def gaussian_moment(order: int) -> float:
    """Standard normal moment via the recursion a(l) = (l-1) a(l-2).

    Seeds a(0) = 1, a(1) = 0, so even orders give the double factorials
    and odd orders vanish.
    """
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    prev2, prev1 = 1.0, 0.0  # a(0), a(1)
    if order == 0:
        return prev2
    for l in range(2, order + 1):
        prev2, prev1 = prev1, (l - 1) * prev2
    return prev1


@dataclass(frozen=True)
class GaussianMoments:
    """Table of a(0..l_max)."""

    values: np.ndarray

    def __getitem__(self, order: int) -> float:
        return float(self.values[order])


def gaussian_moment_table(l_max: int) -> GaussianMoments:
    return GaussianMoments(np.array([gaussian_moment(l) for l in range(l_max + 1)]))


def _check_high_temp(beta: float, ceiling: float | None):
    limit = HIGH_TEMP_CEILING if ceiling is None else ceiling
    if beta > limit:
        raise ValueError(
            f"beta={beta} exceeds the high-temperature ceiling {limit}; "
            "raise the ceiling explicitly to run anyway"
        )


@dataclass(frozen=True)
class GaussianTargetObservable:
    """prod_l a(k_l) * <S_1^2>^{k/2}, the Gaussian moment target per disorder.

    rhs_mode 'expect_power' leaves the power inside the disorder average
    (the default reading); 'power_expect' is applied by the caller after
    averaging, so this observable then returns <S_1^2> itself.
    """

    spec: exact.ReplicaSpec
    rhs_mode: str = "expect_power"

    def _y2(self, table, weights):
        return exact.y_moment(exact.x_moments(table, weights, 2), 2)

    def evaluate_exact(self, table, weights):
        y2 = self._y2(table, weights)
        if self.rhs_mode == "power_expect":
            return y2
        return self.coefficient * y2 ** (self.spec.total / 2)

    def evaluate_mcmc(self, y_series_list, overlap_series, x_series):
        y2 = float(np.mean(y_series_list[0].values ** 2))
        if self.rhs_mode == "power_expect":
            return y2
        return self.coefficient * y2 ** (self.spec.total / 2)

    @property
    def coefficient(self) -> float:
        out = 1.0
        for k in self.spec.exponents:
            out *= gaussian_moment(k)
        return out

    n_pairs = 1


@dataclass(frozen=True)
class CltReport:
    """Both sides of the moment-matching identity plus their paired gap."""

    spec: exact.ReplicaSpec
    lhs: Estimate
    rhs: Estimate
    delta: float
    delta_stderr: float
    max_abs_weight: float
    rhs_mode: str

    @property
    def ratio(self) -> float:
        return self.delta / self.max_abs_weight


def clt_discrepancy(
    spec: exact.ReplicaSpec,
    params: ModelParams,
    weights: WeightVector,
    plan: DisorderPlan,
    rhs_mode: str = "expect_power",
    beta_ceiling: float | None = None,
) -> CltReport:
    """|E<prod S_l^{k_l}> - prod a(k_l) E<S_1^2>^{k/2}| with shared disorders.

    Both sides are evaluated on the same disorder samples, so the gap is a
    paired estimate and its stderr comes from the per-disorder differences.
    """
    if rhs_mode not in ("expect_power", "power_expect"):
        raise ValueError(f"unknown rhs_mode {rhs_mode!r}")
    _check_high_temp(params.beta, beta_ceiling)
    lhs_obs = ReplicaProductObservable(spec=spec)
    rhs_obs = GaussianTargetObservable(spec=spec, rhs_mode=rhs_mode)
    values = per_disorder_values([lhs_obs, rhs_obs], params, weights, plan)
    lhs_vals, rhs_vals = values[:, 0], values[:, 1]
    m = plan.n_disorders
    seed_info = f"SeedSequence([{plan.base_seed}, m]), m < {m}"
    lhs = Estimate(
        value=float(lhs_vals.mean()),
        stderr=float(lhs_vals.std(ddof=1) / np.sqrt(m)),
        n_samples=m,
        seed_info=seed_info,
    )
    if rhs_mode == "power_expect":
        y2_mean = float(rhs_vals.mean())
        coeff = rhs_obs.coefficient
        rhs_value = coeff * y2_mean ** (spec.total / 2)
        # Delta method for the stderr of a power of the mean.
        dpow = (
            coeff * (spec.total / 2) * y2_mean ** (spec.total / 2 - 1)
            if spec.total >= 2
            else 0.0
        )
        y2_se = float(rhs_vals.std(ddof=1) / np.sqrt(m))
        rhs = Estimate(value=rhs_value, stderr=abs(dpow) * y2_se, n_samples=m, seed_info=seed_info)
        diffs = lhs_vals - rhs_value
    else:
        rhs = Estimate(
            value=float(rhs_vals.mean()),
            stderr=float(rhs_vals.std(ddof=1) / np.sqrt(m)),
            n_samples=m,
            seed_info=seed_info,
        )
        diffs = lhs_vals - rhs_vals
    delta = abs(float(diffs.mean()))
    delta_se = float(diffs.std(ddof=1) / np.sqrt(m))
    return CltReport(
        spec=spec,
        lhs=lhs,
        rhs=rhs,
        delta=delta,
        delta_stderr=delta_se,
        max_abs_weight=weights.max_abs,
        rhs_mode=rhs_mode,
    )


def clt2_discrepancy(
    spec: exact.ReplicaSpec,
    params: ModelParams,
    weights: WeightVector,
    plan: DisorderPlan,
    beta_ceiling: float | None = None,
) -> Estimate:
    """E (<prod S_l^{k_l}> - prod a(k_l) <S_1^2>^{k/2})^2."""
    from .disorder import nu_disorder_variance

    _check_high_temp(params.beta, beta_ceiling)
    return nu_disorder_variance(
        ReplicaProductObservable(spec=spec),
        GaussianTargetObservable(spec=spec, rhs_mode="expect_power"),
        params,
        weights,
        plan,
    )


PROFILES = {
    "uniform": lambda n, alpha=None: uniform_weights(n),
    "one_hot": lambda n, alpha=None: one_hot_weights(n),
    "power_law": lambda n, alpha=1.0: power_law_weights(n, alpha),
}


@dataclass(frozen=True)
class SweepRow:
    n_spins: int
    profile: str
    max_abs_weight: float
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    delta: float
    delta_stderr: float

    @property
    def ratio(self) -> float:
        return self.delta / self.max_abs_weight


@dataclass(frozen=True)
class SweepResult:
    rows: list
    slope: float  # fitted slope of log delta vs log max|t_i|


def scaling_sweep(
    spec: exact.ReplicaSpec,
    beta: float,
    h: float,
    n_list,
    profile: str,
    plan: DisorderPlan,
    alpha: float = 1.0,
    rhs_mode: str = "expect_power",
    beta_ceiling: float | None = None,
) -> SweepResult:
    """Discrepancy rows over an N grid for one weight profile.

    The slope is the least-squares fit of log delta against log max|t_i|;
    it is NaN when max|t_i| does not vary (the one-hot profile).
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    rows = []
    for n in n_list:
        params = ModelParams(beta=beta, h=h, n_spins=n)
        weights = PROFILES[profile](n, alpha)
        report = clt_discrepancy(
            spec, params, weights, plan, rhs_mode=rhs_mode, beta_ceiling=beta_ceiling
        )
        rows.append(
            SweepRow(
                n_spins=n,
                profile=profile,
                max_abs_weight=weights.max_abs,
                lhs=report.lhs.value,
                lhs_stderr=report.lhs.stderr,
                rhs=report.rhs.value,
                rhs_stderr=report.rhs.stderr,
                delta=report.delta,
                delta_stderr=report.delta_stderr,
            )
        )
    log_t = np.log([r.max_abs_weight for r in rows])
    log_d = np.log([max(r.delta, 1e-300) for r in rows])
    if np.ptp(log_t) == 0.0:
        slope = float("nan")
    else:
        slope = float(np.polyfit(log_t, log_d, 1)[0])
    return SweepResult(rows=rows, slope=slope)


@dataclass(frozen=True)
class DistributionDiagnostics:
    ks_distance: float
    excess_kurtosis: float
    y_variance: float
    n_atoms: int


def _exact_y_atoms(table, weights):
    """Atoms (values, probabilities) of Y for one disorder, by enumeration.

    X values are grouped after rounding to 12 decimals; the grouping only
    merges float noise between configurations with equal weighted sums.
    """
    x = exact.weighted_average_values(table, weights)
    xr = np.round(x, 12)
    atoms, inverse = np.unique(xr, return_inverse=True)
    masses = np.bincount(inverse, weights=table.probs)
    if len(atoms) ** 2 > 1 << 26:
        raise CapacityError(
            f"{len(atoms)} distinct values make pair enumeration too large"
        )
    diff = (atoms[:, None] - atoms[None, :]).ravel()
    mass = np.outer(masses, masses).ravel()
    order = np.argsort(diff, kind="stable")
    return diff[order], mass[order]


def _ks_to_normal(values, masses, sigma):
    """sup_y |F(y) - Phi(y/sigma)| for a discrete distribution.

    Coincident atoms are merged first so the CDF is evaluated only at
    genuine jump points.
    """
    unique, inverse = np.unique(values, return_inverse=True)
    merged = np.bincount(inverse, weights=masses)
    cdf_above = np.cumsum(merged)
    cdf_below = cdf_above - merged
    normal = ndtr(unique / sigma)
    return float(np.max(np.maximum(np.abs(cdf_above - normal), np.abs(cdf_below - normal))))


def y_distribution_diagnostics(
    params: ModelParams,
    weights: WeightVector,
    disorder: Disorder,
    engine: str = "exact",
    schedule=None,
    seed: int = 0,
) -> DistributionDiagnostics:
    """How Gaussian is Y for this one disorder realization.

    Reports the Kolmogorov-Smirnov distance to Normal(0, <Y^2>), with the
    variance taken from the same disorder, and the excess kurtosis.
    """
    if engine == "exact":
        table = exact_gibbs(params, disorder)
        xm = exact.x_moments(table, weights, 4)
        y2 = exact.y_moment(xm, 2)
        y4 = exact.y_moment(xm, 4)
        values, masses = _exact_y_atoms(table, weights)
        ks = _ks_to_normal(values, masses, np.sqrt(y2))
        return DistributionDiagnostics(
            ks_distance=ks,
            excess_kurtosis=y4 / y2**2 - 3.0,
            y_variance=y2,
            n_atoms=len(values),
        )
    if engine == "mcmc":
        if schedule is None:
            raise ValueError("mcmc engine requires a schedule")
        from .mcmc import run_replica_pair

        y_series, _, _ = run_replica_pair(params, disorder, weights, schedule, seed)
        samples = np.sort(y_series.values)
        y2 = float(np.mean(samples**2))
        y4 = float(np.mean(samples**4))
        masses = np.full(len(samples), 1.0 / len(samples))
        ks = _ks_to_normal(samples, masses, np.sqrt(y2))
        return DistributionDiagnostics(
            ks_distance=ks,
            excess_kurtosis=y4 / y2**2 - 3.0,
            y_variance=y2,
            n_atoms=len(samples),
        )
    raise ValueError(f"unknown engine {engine!r}")
