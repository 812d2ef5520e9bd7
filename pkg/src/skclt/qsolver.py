"""Replica-symmetric fixed point q = E tanh^2(beta * z * sqrt(q) + h).

The expectation over the standard normal z is evaluated by Gauss-Hermite
quadrature in the probabilists' normalization (weights summing to 1), and
the fixed point by damped iteration from q0 = tanh(h)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss

DEFAULT_NODES = 64
DEFAULT_TOL = 1e-12
DAMPING = 0.5
MAX_ITERS = 10_000


class FixedPointError(RuntimeError):
    """Raised when the damped iteration fails to converge; carries the last iterate."""

    def __init__(self, message: str, last_iterate: float):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class QSolution:
    q: float
    residual: float
    iterations: int
    quadrature_nodes: int


@lru_cache(maxsize=32)
def standard_normal_nodes(nodes: int):
    """(z_i, w_i) with sum w_i = 1 so that E f(z) ~ sum w_i f(z_i)."""
    if nodes < 1:
        raise ValueError(f"node count must be >= 1, got {nodes}")
    x, w = hermgauss(nodes)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def gauss_hermite_expect(func, nodes: int = DEFAULT_NODES) -> float:
    """E f(z) for z standard normal, exact for polynomials of degree < 2*nodes."""
    z, w = standard_normal_nodes(nodes)
    return float(np.dot(w, func(z)))


def _fixed_point_map(q, beta, h, nodes):
    return gauss_hermite_expect(
        lambda z: np.tanh(beta * z * np.sqrt(q) + h) ** 2, nodes
    )


def solve_q(
    beta: float,
    h: float,
    tol: float = DEFAULT_TOL,
    nodes: int = DEFAULT_NODES,
    max_iters: int = MAX_ITERS,
) -> QSolution:
    """Solve the replica-symmetric equation by damped fixed-point iteration.

    At h = 0 the root q = 0 is returned directly (the high-temperature
    solution); iterating around it is avoided because the trivial root is
    not attracting from every side at larger beta.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if h < 0:
        raise ValueError(f"h must be >= 0, got {h}")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if h == 0.0:
        return QSolution(q=0.0, residual=0.0, iterations=0, quadrature_nodes=nodes)

    q = np.tanh(h) ** 2
    for iteration in range(1, max_iters + 1):
        mapped = _fixed_point_map(q, beta, h, nodes)
        residual = abs(q - mapped)
        if residual < tol:
            return QSolution(
                q=float(q),
                residual=float(residual),
                iterations=iteration,
                quadrature_nodes=nodes,
            )
        q = (1.0 - DAMPING) * q + DAMPING * mapped
    raise FixedPointError(
        f"no convergence after {max_iters} iterations (last q={q})", float(q)
    )
