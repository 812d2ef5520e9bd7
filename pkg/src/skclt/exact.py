"""Exact multi-replica observables for one disorder realization.

All quantities here are computed from a GibbsTable without enumerating
replica tuples when independence of replicas allows factorization.  The
brute-force replica enumerations are kept alongside as cross-check oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .model import CapacityError, GibbsTable, WeightVector

# Direct replica-pair enumeration is quadratic in 2**N; keep it desk-scale.
PAIR_ENUMERATION_CEILING = 13


@dataclass(frozen=True)
class MomentVector:
    """Gibbs moments <X^m> of the weighted spin average, m = 0..k_max."""

    values: np.ndarray
    k_max: int

    def __getitem__(self, m: int) -> float:
        if m > self.k_max:
            raise ValueError(f"moment order {m} exceeds stored k_max={self.k_max}")
        return float(self.values[m])


@dataclass(frozen=True)
class ReplicaSpec:
    """Exponents (k_1, ..., k_n) of a product over independent replica pairs."""

    exponents: tuple

    def __post_init__(self):
        if len(self.exponents) < 1:
            raise ValueError("spec needs at least one exponent")
        if any(k < 0 for k in self.exponents):
            raise ValueError(f"exponents must be nonnegative, got {self.exponents}")

    @property
    def total(self) -> int:
        return sum(self.exponents)

    @property
    def n_pairs(self) -> int:
        return len(self.exponents)


def weighted_average_values(table: GibbsTable, weights: WeightVector) -> np.ndarray:
    """X(c) = sum_i t_i sigma_i(c) for every configuration code."""
    if weights.n_spins != table.n_spins:
        raise ValueError(
            f"weights are for N={weights.n_spins}, table has N={table.n_spins}"
        )
    return table.spins() @ weights.weights


def x_moments(table: GibbsTable, weights: WeightVector, k_max: int) -> MomentVector:
    """<X^m> for m = 0..k_max in one enumeration pass."""
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    x = weighted_average_values(table, weights)
    values = np.empty(k_max + 1)
    power = np.ones_like(x)
    for m in range(k_max + 1):
        values[m] = np.dot(table.probs, power)
        if m < k_max:
            power = power * x
    return MomentVector(values=values, k_max=k_max)


def y_moment(x: MomentVector, k: int) -> float:
    """<Y^k> for Y = X - X' with X' an independent replica copy.

    Odd orders vanish identically by the symmetry of Y, so they are
    returned as exact zeros.
    """
    if k > x.k_max:
        raise ValueError(f"order {k} needs x-moments through {k}, have {x.k_max}")
    if k % 2 == 1:
        return 0.0
    return float(
        sum((-1) ** j * comb(k, j) * x[k - j] * x[j] for j in range(k + 1))
    )


def y_moments(x: MomentVector, k_max: int) -> np.ndarray:
    """<Y^k> for k = 0..k_max."""
    return np.array([y_moment(x, k) for k in range(k_max + 1)])


def replica_product(y: np.ndarray, spec: ReplicaSpec) -> float:
    """<prod_l S_l^{k_l}> for one disorder.

    The S_l live on disjoint replica pairs, so under the product Gibbs
    measure the expectation factorizes into prod_l <Y^{k_l}>.
    """
    k_big = max(spec.exponents)
    if k_big >= len(y):
        raise ValueError(f"need Y-moments through {k_big}, have {len(y) - 1}")
    out = 1.0
    for k in spec.exponents:
        out *= float(y[k])
    return out


def _site_product_matrix(table: GibbsTable, order: int) -> np.ndarray:
    """(2**N, N**order) matrix of products sigma_{i_1}...sigma_{i_order}."""
    s = table.spins()
    out = s
    for _ in range(order - 1):
        out = np.einsum("ca,ci->cai", out, s).reshape(len(s), -1)
    return out


def overlap_moment(table: GibbsTable, m: int) -> float:
    """<R_{1,2}^m> via squared single-replica correlators.

    <R^m> = N^{-m} sum over m-tuples of <sigma_{i_1}...sigma_{i_m}>^2.
    The tuple sum is organized as a Frobenius norm of a correlator matrix,
    so the cost is one (2**N x N^ceil(m/2)) matmul.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m > 4:
        raise ValueError(f"correlation-sum path supports m <= 4, got {m}")
    n = table.n_spins
    p = table.probs
    left = _site_product_matrix(table, m // 2) if m > 1 else None
    if m == 1:
        corr = table.spin_means()
    elif m % 2 == 0:
        corr = (left * p[:, None]).T @ left
    else:
        corr = (left * p[:, None]).T @ _site_product_matrix(table, m - m // 2)
    return float(np.sum(np.asarray(corr) ** 2)) / n**m


def centered_overlap_moment(table: GibbsTable, q: float, order: int) -> float:
    """<(R_{1,2} - q)^order> by binomial expansion in overlap moments."""
    if order % 2 == 1:
        raise ValueError(f"order must be even, got {order}")
    if order > 4:
        raise ValueError(f"supported orders are <= 4, got {order}")
    total = 0.0
    for j in range(order + 1):
        r_j = 1.0 if j == 0 else overlap_moment(table, j)
        total += comb(order, j) * (-q) ** (order - j) * r_j
    return total


def overlap_decomposition_terms(table: GibbsTable, q: float, spins_1, spins_2):
    """The four fluctuation terms whose sum reconstructs R_{1,2} - q.

    With b = <sigma>:
        cross   = N^{-1} (sigma^1 - b) . (sigma^2 - b)
        single1 = N^{-1} (sigma^1 - b) . b
        single2 = N^{-1} (sigma^2 - b) . b
        offset  = N^{-1} b . b - q
    """
    n = table.n_spins
    b = table.spin_means()
    s1 = np.asarray(spins_1, dtype=float)
    s2 = np.asarray(spins_2, dtype=float)
    cross = float((s1 - b) @ (s2 - b)) / n
    single1 = float((s1 - b) @ b) / n
    single2 = float((s2 - b) @ b) / n
    offset = float(b @ b) / n - q
    return cross, single1, single2, offset


def t_decomposition_check(table: GibbsTable, q: float, spins_1, spins_2) -> float:
    """|(R_{1,2} - q) - (cross + single1 + single2 + offset)| on one pair."""
    n = table.n_spins
    s1 = np.asarray(spins_1, dtype=float)
    s2 = np.asarray(spins_2, dtype=float)
    overlap = float(s1 @ s2) / n
    return abs((overlap - q) - sum(overlap_decomposition_terms(table, q, s1, s2)))


def t_second_moments(table: GibbsTable):
    """(<cross^2>, <single^2>) of the overlap fluctuation terms.

    <cross^2>  = N^{-2} sum_ij Cov_ij^2
    <single^2> = N^{-2} sum_ij Cov_ij b_i b_j
    with Cov_ij = <sigma_i sigma_j> - b_i b_j.
    """
    n = table.n_spins
    b = table.spin_means()
    cov = table.pair_correlations() - np.outer(b, b)
    cross_sq = float(np.sum(cov**2)) / n**2
    single_sq = float(b @ cov @ b) / n**2
    return cross_sq, single_sq


def overlap_pair_expectations(table: GibbsTable, weights: WeightVector, q: float):
    """<(R_a - q)(R_b - q) * S_1^2> for the three joint index configurations.

    S_1^2 lives on replicas disjoint from all overlap indices, so the inner
    expectation factorizes into <Y^2> times a pure overlap factor:

      equal:    both centered overlaps on the same replica pair
      share:    the two pairs share exactly one replica
      disjoint: all four replicas distinct

    Returns a dict with those three values for this disorder.
    """
    n = table.n_spins
    b = table.spin_means()
    y2 = y_moment(x_moments(table, weights, 2), 2)

    equal = centered_overlap_moment(table, q, 2)

    # Shared replica: average over it of (<R(sigma, .)> - q)^2, and
    # <R(sigma, .)> = sigma . b / N.
    s = table.spins()
    site_mean_overlap = (s @ b) / n
    share = float(np.dot(table.probs, (site_mean_overlap - q) ** 2))

    disjoint = (float(b @ b) / n - q) ** 2

    return {"equal": equal * y2, "share": share * y2, "disjoint": disjoint * y2}


# ---------------------------------------------------------------------------
# Brute-force oracles: direct enumeration over replica tuples.  These stay
# independent of the factorized paths above and exist to validate them.
# ---------------------------------------------------------------------------


def _require_pair_capacity(n: int):
    if n > PAIR_ENUMERATION_CEILING:
        raise CapacityError(
            f"pair enumeration supports N <= {PAIR_ENUMERATION_CEILING}, got N={n}"
        )


def brute_force_y_moment(table: GibbsTable, weights: WeightVector, k: int) -> float:
    """<Y^k> by summing over all 4**N replica pairs."""
    _require_pair_capacity(table.n_spins)
    x = weighted_average_values(table, weights)
    p = table.probs
    diff = x[:, None] - x[None, :]
    return float(p @ (diff**k) @ p)


def brute_force_overlap_moment(table: GibbsTable, m: int) -> float:
    """<R_{1,2}^m> by summing over all 4**N replica pairs."""
    _require_pair_capacity(table.n_spins)
    s = table.spins()
    p = table.probs
    overlap = (s @ s.T) / table.n_spins
    return float(p @ (overlap**m) @ p)


def brute_force_replica_product(
    table: GibbsTable, weights: WeightVector, spec: ReplicaSpec
) -> float:
    """<prod_l S_l^{k_l}> by enumerating all 2n replicas jointly.

    Builds the dense joint tensor over (2**N)^(2n) replica tuples; no
    independence shortcut, so it genuinely validates the factorized path.
    """
    n_replicas = 2 * spec.n_pairs
    size = 1 << table.n_spins
    if size**n_replicas > 1 << 26:
        raise CapacityError(
            f"{n_replicas}-replica enumeration too large for N={table.n_spins}"
        )
    x = weighted_average_values(table, weights)
    p = table.probs
    joint_prob = np.ones(())
    joint_obs = np.ones(())
    for k in spec.exponents:
        pair_prob = np.multiply.outer(p, p)
        pair_obs = (x[:, None] - x[None, :]) ** k
        joint_prob = np.multiply.outer(joint_prob, pair_prob)
        joint_obs = np.multiply.outer(joint_obs, pair_obs)
    return float(np.sum(joint_prob * joint_obs))
