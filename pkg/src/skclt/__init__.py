"""Desk-scale simulation and verification engine for weighted spin averages
in the high-temperature Sherrington-Kirkpatrick model."""

__version__ = "0.1.0"

from .model import (
    CapacityError,
    DimensionMismatchError,
    Disorder,
    GibbsTable,
    ModelParams,
    WeightVector,
    energy,
    exact_gibbs,
    explicit_weights,
    one_hot_weights,
    power_law_weights,
    sample_disorder,
    single_replica_expectation,
    uniform_weights,
)
from .exact import (
    MomentVector,
    ReplicaSpec,
    centered_overlap_moment,
    overlap_moment,
    replica_product,
    t_decomposition_check,
    t_second_moments,
    x_moments,
    y_moment,
    y_moments,
)
from .qsolver import QSolution, gauss_hermite_expect, solve_q
from .disorder import DisorderPlan, Estimate, nu, nu_disorder_variance
from .clt import (
    CltReport,
    clt2_discrepancy,
    clt_discrepancy,
    gaussian_moment,
    scaling_sweep,
    y_distribution_diagnostics,
)

__all__ = [name for name in dir() if not name.startswith("_")]
