"""Core objects of the SK model: parameters, disorder, weights, exact Gibbs tables.

Configurations are encoded as integer codes c in [0, 2**N): bit i of c is
(sigma_i + 1) / 2, so code 0 is the all-minus configuration.  This fixes the
enumeration order used everywhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# 2**20 configurations keeps an exact table build at seconds scale.
ENUMERATION_CEILING = 20
# Default ceiling on beta for high-temperature experiments (overridable).
HIGH_TEMP_CEILING = 0.25
# Part of the reproducibility contract: outputs record how normals were drawn.
GENERATOR_VERSION = f"numpy-{np.__version__}/PCG64/standard_normal"

_CHUNK = 1 << 16  # configs per block in table builds, caps working memory


class CapacityError(ValueError):
    """System size exceeds an enumeration or evaluation ceiling."""


class DimensionMismatchError(ValueError):
    """Array arguments disagree on the number of spins."""


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, external field, and system size."""

    beta: float
    h: float
    n_spins: int

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.h < 0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if self.n_spins < 1:
            raise ValueError(f"n_spins must be >= 1, got {self.n_spins}")


@dataclass(frozen=True)
class Disorder:
    """One realization of the Gaussian couplings g_ij, 1 <= i < j <= N.

    ``couplings`` is flat, row-major over pairs: (0,1), (0,2), ..., (N-2,N-1).
    ``seed`` is a provenance tag; the array is bit-reproducible from it.
    """

    couplings: np.ndarray
    n_spins: int
    seed: int

    def __post_init__(self):
        n = self.n_spins
        expected = n * (n - 1) // 2
        if self.couplings.shape != (expected,):
            raise DimensionMismatchError(
                f"expected {expected} couplings for N={n}, got {self.couplings.shape}"
            )

    def upper_matrix(self) -> np.ndarray:
        """(N, N) matrix with g_ij above the diagonal, zero elsewhere."""
        n = self.n_spins
        g = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        g[iu] = self.couplings
        return g

    def symmetric_matrix(self) -> np.ndarray:
        """Full symmetric coupling matrix with zero diagonal."""
        g = self.upper_matrix()
        return g + g.T


def sample_disorder(seed: int, n_spins: int) -> Disorder:
    """Draw the N(N-1)/2 i.i.d. standard normal couplings for one realization."""
    if n_spins < 1:
        raise ValueError(f"n_spins must be >= 1, got {n_spins}")
    n_pairs = n_spins * (n_spins - 1) // 2
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return Disorder(couplings=rng.standard_normal(n_pairs), n_spins=n_spins, seed=seed)


@dataclass(frozen=True)
class WeightVector:
    """Unit-norm coefficients of the weighted spin average."""

    weights: np.ndarray
    profile: str
    max_abs: float = field(default=0.0)

    def __post_init__(self):
        norm_sq = float(np.dot(self.weights, self.weights))
        if abs(norm_sq - 1.0) > 1e-12:
            raise ValueError(
                f"weights must have unit Euclidean norm; squared norm is {norm_sq}"
            )
        object.__setattr__(self, "max_abs", float(np.max(np.abs(self.weights))))

    @property
    def n_spins(self) -> int:
        return len(self.weights)


def uniform_weights(n: int) -> WeightVector:
    """t_i = 1/sqrt(N) for all i."""
    return WeightVector(np.full(n, 1.0 / np.sqrt(n)), "uniform")


def one_hot_weights(n: int) -> WeightVector:
    """t = (1, 0, ..., 0): the maximal-max|t_i| profile."""
    w = np.zeros(n)
    w[0] = 1.0
    return WeightVector(w, "one-hot")


def power_law_weights(n: int, alpha: float) -> WeightVector:
    """t_i proportional to i**(-alpha), normalized to unit norm."""
    w = np.arange(1, n + 1, dtype=float) ** (-alpha)
    w /= np.linalg.norm(w)
    return WeightVector(w, f"power-law({alpha})")


def explicit_weights(values) -> WeightVector:
    """Explicit coefficients; rejected if the squared norm deviates from 1."""
    return WeightVector(np.asarray(values, dtype=float), "explicit")


def spin_matrix(n_spins: int, codes=None) -> np.ndarray:
    """(n_codes, N) float64 matrix of +-1 spins for the given configuration codes.

    Defaults to all 2**N codes in increasing order.
    """
    if codes is None:
        codes = np.arange(1 << n_spins, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n_spins)) & 1
    return 2.0 * bits - 1.0


def config_from_code(code: int, n_spins: int) -> np.ndarray:
    """Spin vector (+-1, float64) for one configuration code."""
    return spin_matrix(n_spins, np.array([code]))[0]


def code_from_config(spins) -> int:
    """Inverse of config_from_code."""
    bits = (np.asarray(spins) > 0).astype(np.int64)
    return int(np.dot(bits, 1 << np.arange(len(bits), dtype=np.int64)))


def energy(params: ModelParams, disorder: Disorder, spins) -> float:
    """Exponent of the Gibbs weight, -H_N(sigma), for one configuration.

    -H_N = (beta / sqrt(N)) * sum_{i<j} g_ij sigma_i sigma_j + h * sum_i sigma_i
    """
    spins = np.asarray(spins, dtype=float)
    n = params.n_spins
    if spins.shape != (n,):
        raise DimensionMismatchError(f"expected {n} spins, got shape {spins.shape}")
    if disorder.n_spins != n:
        raise DimensionMismatchError(
            f"disorder is for N={disorder.n_spins}, params have N={n}"
        )
    gu = disorder.upper_matrix()
    pair = float(spins @ (gu @ spins))
    return params.beta / np.sqrt(n) * pair + params.h * float(spins.sum())


def _log_weights_block(params, gu, codes):
    s = spin_matrix(params.n_spins, codes)
    pair = np.einsum("ci,ci->c", s @ gu, s)
    return params.beta / np.sqrt(params.n_spins) * pair + params.h * s.sum(axis=1)


def log_weights(params: ModelParams, disorder: Disorder) -> np.ndarray:
    """-H_N for every configuration code, computed in blocks."""
    n = params.n_spins
    gu = disorder.upper_matrix()
    total = 1 << n
    out = np.empty(total)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        out[start : start + len(codes)] = _log_weights_block(params, gu, codes)
    return out


def logsumexp(a: np.ndarray) -> float:
    """Max-shifted log-sum-exp; safe for exponents up to ~700."""
    m = float(np.max(a))
    if not np.isfinite(m):
        return m
    return m + float(np.log(np.sum(np.exp(a - m))))


@dataclass(eq=False)
class GibbsTable:
    """Exact per-configuration probabilities of G for one disorder.

    Immutable after construction; safe to share read-only across tasks.
    """

    params: ModelParams
    disorder: Disorder
    log_z: float
    probs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_spins(self) -> int:
        return self.params.n_spins

    def spins(self) -> np.ndarray:
        """(2**N, N) spin matrix in configuration-code order (cached)."""
        if "spins" not in self._cache:
            self._cache["spins"] = spin_matrix(self.n_spins)
        return self._cache["spins"]

    def spin_means(self) -> np.ndarray:
        """b_i = <sigma_i> for every site (cached)."""
        if "means" not in self._cache:
            self._cache["means"] = self.probs @ self.spins()
        return self._cache["means"]

    def pair_correlations(self) -> np.ndarray:
        """C_ij = <sigma_i sigma_j>, with unit diagonal (cached)."""
        if "corr" not in self._cache:
            s = self.spins()
            self._cache["corr"] = (s * self.probs[:, None]).T @ s
        return self._cache["corr"]


def exact_gibbs(
    params: ModelParams, disorder: Disorder, ceiling: int = ENUMERATION_CEILING
) -> GibbsTable:
    """Enumerate all 2**N configurations and normalize via log-sum-exp."""
    n = params.n_spins
    if n > ceiling:
        raise CapacityError(
            f"exact enumeration supports N <= {ceiling}, got N={n}"
        )
    if disorder.n_spins != n:
        raise DimensionMismatchError(
            f"disorder is for N={disorder.n_spins}, params have N={n}"
        )
    lw = log_weights(params, disorder)
    log_z = logsumexp(lw)
    return GibbsTable(params=params, disorder=disorder, log_z=log_z, probs=np.exp(lw - log_z))


def single_replica_expectation(table: GibbsTable, observable) -> float:
    """<f> = sum_c probs[c] * f(sigma(c)) for a configuration-to-real function."""
    s = table.spins()
    values = np.array([observable(s[c]) for c in range(len(table.probs))])
    return float(np.dot(table.probs, values))
