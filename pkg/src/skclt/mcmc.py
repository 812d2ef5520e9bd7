"""Single-spin-flip sampling of G for sizes beyond the exact ceiling.

Heat-bath (Glauber) updates in a fixed scan order are the default; the
composition of per-site kernels leaves G stationary.  A Metropolis variant
sits behind a flag.  Replica pairs share one disorder and provide the series
for the symmetrized weighted average and the overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    Disorder,
    GibbsTable,
    ModelParams,
    WeightVector,
    spin_matrix,
)

CACHE_CHECK_INTERVAL = 256  # sweeps between full local-field recomputations
CACHE_WARN_LEVEL = 1e-9
CACHE_FAIL_LEVEL = 1e-6


class CacheIntegrityError(RuntimeError):
    """Incremental local fields drifted away from a fresh recomputation."""


class ScheduleError(ValueError):
    """Sweep schedule is inconsistent (e.g. burn-in exceeds total sweeps)."""


@dataclass
class ChainState:
    """One Markov chain: spins, incrementally maintained local fields, rng.

    local_fields[i] = sum_j (beta/sqrt(N)) g_ij sigma_j + h, excluding j = i.
    """

    spins: np.ndarray
    local_fields: np.ndarray
    coupling: np.ndarray  # (beta/sqrt(N)) * symmetric g matrix
    h: float
    rng: np.random.Generator
    sweeps_done: int = 0

    def recomputed_fields(self) -> np.ndarray:
        return self.coupling @ self.spins + self.h

    def check_cache(self):
        drift = float(np.max(np.abs(self.local_fields - self.recomputed_fields())))
        if drift > CACHE_FAIL_LEVEL:
            raise CacheIntegrityError(
                f"local-field cache drifted by {drift} after {self.sweeps_done} sweeps"
            )
        return drift


def init_chain(
    params: ModelParams, disorder: Disorder, seed, start=None
) -> ChainState:
    """Fresh chain with either a random or a given start configuration."""
    n = params.n_spins
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(seq))
    if start is None:
        spins = rng.choice([-1.0, 1.0], size=n)
    else:
        spins = np.asarray(start, dtype=float).copy()
    coupling = params.beta / np.sqrt(n) * disorder.symmetric_matrix()
    state = ChainState(
        spins=spins,
        local_fields=coupling @ spins + params.h,
        coupling=coupling,
        h=params.h,
        rng=rng,
    )
    return state


def glauber_sweep(state: ChainState) -> ChainState:
    """N heat-bath updates in fixed scan order; O(N) cache update per flip."""
    n = len(state.spins)
    uniforms = state.rng.random(n)
    for i in range(n):
        p_up = 1.0 / (1.0 + np.exp(-2.0 * state.local_fields[i]))
        new = 1.0 if uniforms[i] < p_up else -1.0
        delta = new - state.spins[i]
        if delta != 0.0:
            state.spins[i] = new
            state.local_fields += state.coupling[:, i] * delta
    state.sweeps_done += 1
    if state.sweeps_done % CACHE_CHECK_INTERVAL == 0:
        state.check_cache()
    return state


def metropolis_sweep(state: ChainState) -> ChainState:
    """N single-flip Metropolis updates in fixed scan order."""
    n = len(state.spins)
    uniforms = state.rng.random(n)
    for i in range(n):
        # Exponent change under a flip of spin i: -2 sigma_i lambda_i.
        log_accept = -2.0 * state.spins[i] * state.local_fields[i]
        if log_accept >= 0.0 or uniforms[i] < np.exp(log_accept):
            delta = -2.0 * state.spins[i]
            state.spins[i] = -state.spins[i]
            state.local_fields += state.coupling[:, i] * delta
    state.sweeps_done += 1
    if state.sweeps_done % CACHE_CHECK_INTERVAL == 0:
        state.check_cache()
    return state


_SWEEPS = {"glauber": glauber_sweep, "metropolis": metropolis_sweep}


@dataclass(frozen=True)
class Schedule:
    sweeps: int
    burn_in: int = 1000
    thin: int = 1

    def __post_init__(self):
        if self.sweeps <= self.burn_in:
            raise ScheduleError(
                f"sweeps ({self.sweeps}) must exceed burn_in ({self.burn_in})"
            )
        if self.thin < 1:
            raise ScheduleError(f"thin must be >= 1, got {self.thin}")

    @property
    def n_measurements(self) -> int:
        return (self.sweeps - self.burn_in) // self.thin


@dataclass(frozen=True)
class SampleSeries:
    """Thinned measurements of one scalar observable along a chain."""

    values: np.ndarray
    burn_in: int
    thin: int

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError("series must be one-dimensional")


def run_chain(
    params: ModelParams,
    disorder: Disorder,
    schedule: Schedule,
    seed,
    measure,
    method: str = "glauber",
):
    """Run one chain and record measure(spins) every `thin` sweeps after burn-in."""
    sweep = _SWEEPS[method]
    state = init_chain(params, disorder, seed)
    for _ in range(schedule.burn_in):
        sweep(state)
    values = np.empty(schedule.n_measurements)
    for m in range(schedule.n_measurements):
        for _ in range(schedule.thin):
            sweep(state)
        values[m] = measure(state.spins)
    return SampleSeries(values=values, burn_in=schedule.burn_in, thin=schedule.thin)


def run_replica_pair(
    params: ModelParams,
    disorder: Disorder,
    weights: WeightVector,
    schedule: Schedule,
    seed,
    method: str = "glauber",
    extra_pairs: int = 0,
):
    """Two independent chains on one disorder; series of Y and of the overlap.

    Returns (y_series, overlap_series, x_series) where the x series averages
    the weighted spin average over both chains.  extra_pairs > 0 appends
    further independent pairs and returns per-measurement products instead;
    that path is used by the product-spec MCMC engine.
    """
    n = params.n_spins
    root = np.random.SeedSequence(seed)
    children = root.spawn(2 * (1 + extra_pairs))
    chains = [init_chain(params, disorder, s) for s in children]
    sweep = _SWEEPS[method]
    for state in chains:
        for _ in range(schedule.burn_in):
            sweep(state)
    t = weights.weights
    n_meas = schedule.n_measurements
    y_vals = np.empty((1 + extra_pairs, n_meas))
    overlap_vals = np.empty(n_meas)
    x_vals = np.empty(n_meas)
    for m in range(n_meas):
        for state in chains:
            for _ in range(schedule.thin):
                sweep(state)
        for pair in range(1 + extra_pairs):
            a, b = chains[2 * pair], chains[2 * pair + 1]
            y_vals[pair, m] = float(t @ a.spins) - float(t @ b.spins)
        first, second = chains[0], chains[1]
        overlap_vals[m] = float(first.spins @ second.spins) / n
        x_vals[m] = 0.5 * (float(t @ first.spins) + float(t @ second.spins))
    mk = lambda v: SampleSeries(values=v, burn_in=schedule.burn_in, thin=schedule.thin)
    if extra_pairs == 0:
        return mk(y_vals[0]), mk(overlap_vals), mk(x_vals)
    return [mk(y_vals[pair]) for pair in range(1 + extra_pairs)], mk(overlap_vals), mk(x_vals)


@dataclass(frozen=True)
class BatchMeansEstimate:
    """Mean with a batch-means standard error and a stability diagnostic.

    stability_ratio compares the stderr against the one obtained with twice
    as many batches; values near 1 indicate batches longer than the
    autocorrelation time.
    """

    value: float
    stderr: float
    n_samples: int
    n_batches: int
    stability_ratio: float


def batch_means(series: SampleSeries, n_batches: int = 32) -> BatchMeansEstimate:
    """Mean and standard error from n_batches equal batches (tail-truncated)."""
    if n_batches < 8:
        raise ValueError(f"need at least 8 batches, got {n_batches}")
    values = series.values
    if len(values) < 2 * n_batches:
        raise ValueError(
            f"series of length {len(values)} too short for {n_batches} batches"
        )

    def stderr_for(nb):
        size = len(values) // nb
        trimmed = values[: nb * size].reshape(nb, size)
        means = trimmed.mean(axis=1)
        return float(means.mean()), float(means.std(ddof=1) / np.sqrt(nb))

    value, err = stderr_for(n_batches)
    _, err_doubled = stderr_for(2 * n_batches)
    ratio = err_doubled / err if err > 0 else 1.0
    return BatchMeansEstimate(
        value=value,
        stderr=err,
        n_samples=len(values),
        n_batches=n_batches,
        stability_ratio=ratio,
    )


def sweep_transition_matrix(params: ModelParams, disorder: Disorder, method="glauber"):
    """Exact 2**N x 2**N transition matrix of one fixed-order scan.

    Row-stochastic: entry [c, c'] is P(c -> c') after updating sites
    0..N-1 once each.  Used to verify stationarity of G directly.
    """
    n = params.n_spins
    if n > 12:
        raise ValueError("explicit transition matrix limited to N <= 12")
    size = 1 << n
    s = spin_matrix(n)
    coupling = params.beta / np.sqrt(n) * disorder.symmetric_matrix()
    fields = s @ coupling.T + params.h  # local field at every site, every config
    total = np.eye(size)
    for i in range(n):
        p_up = 1.0 / (1.0 + np.exp(-2.0 * fields[:, i]))
        step = np.zeros((size, size))
        codes = np.arange(size)
        up = codes | (1 << i)
        down = codes & ~(1 << i)
        if method == "glauber":
            step[codes, up] += p_up
            step[codes, down] += 1.0 - p_up
        elif method == "metropolis":
            spin_i = s[:, i]
            log_accept = -2.0 * spin_i * fields[:, i]
            accept = np.minimum(1.0, np.exp(log_accept))
            flipped = codes ^ (1 << i)
            step[codes, flipped] += accept
            step[codes, codes] += 1.0 - accept
        else:
            raise ValueError(f"unknown method {method!r}")
        total = total @ step
    return total


def stationarity_gap(table: GibbsTable, transition: np.ndarray) -> float:
    """max |G P - G| over configurations."""
    return float(np.max(np.abs(table.probs @ transition - table.probs)))
