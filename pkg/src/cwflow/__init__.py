"""Optimal conditioned histories for mean-field Glauber dynamics.

The package computes the objects needed to classify a time-evolved
mean-field spin system as Gibbs or non-Gibbs: large-deviation rate
densities, the Euler-Lagrange phase flow, the curve of allowed initial
configurations and its transport, fixed-endpoint cost optimization,
limiting conditional kernels, phase-diagram sweeps, and a finite-size
Monte Carlo cross-check.
"""

__version__ = "0.1.0"

from .model import (
    DomainError,
    ModelParams,
    bernoulli_rate,
    drift,
    flip_rate,
    mean_field_roots,
    quadratic_energy,
    static_rate,
    static_rate_slope,
)
from .ldp import (
    LagrangianEval,
    hamiltonian,
    lagrangian,
    lagrangian_value,
    optimal_momentum,
)
from .flow import BoundaryHit, PhasePoint, Trajectory, acceleration, integrate
from .acc import (
    FoldPoint,
    NoFold,
    TransportResult,
    acc_curve,
    acc_slope,
    fold_times,
    monotone_pieces,
    pre_bad_intervals,
    transport,
)
from .cost import (
    BadPointReport,
    CostProfile,
    HistoryCandidate,
    NoConnection,
    classify_bad,
    cost_profile,
    optimal_histories,
    path_cost_b0,
    shoot,
)
from .gamma import (
    AmbiguousMinimizer,
    KernelEval,
    kernel,
    kernel_jump,
    kernel_one_sided,
    transition_matrix,
)
from .phase import (
    OutOfRegime,
    PhaseDiagram,
    RegionLabel,
    Thresholds,
    beta_sb,
    diagram,
    fold_time_at,
    t_ngs_closed,
    thresholds_numeric,
)
from .mcsim import (
    ChainState,
    InsufficientAcceptance,
    KernelEstimate,
    SimPath,
    estimate_kernel,
    initial_law,
    sample_initial,
    simulate,
)

__all__ = [
    "AmbiguousMinimizer",
    "BadPointReport",
    "BoundaryHit",
    "ChainState",
    "CostProfile",
    "DomainError",
    "FoldPoint",
    "HistoryCandidate",
    "InsufficientAcceptance",
    "KernelEstimate",
    "KernelEval",
    "LagrangianEval",
    "ModelParams",
    "NoConnection",
    "NoFold",
    "OutOfRegime",
    "PhaseDiagram",
    "PhasePoint",
    "RegionLabel",
    "SimPath",
    "Thresholds",
    "Trajectory",
    "TransportResult",
    "acc_curve",
    "acc_slope",
    "acceleration",
    "bernoulli_rate",
    "beta_sb",
    "classify_bad",
    "cost_profile",
    "diagram",
    "drift",
    "estimate_kernel",
    "flip_rate",
    "fold_time_at",
    "fold_times",
    "hamiltonian",
    "initial_law",
    "integrate",
    "kernel",
    "kernel_jump",
    "kernel_one_sided",
    "lagrangian",
    "lagrangian_value",
    "mean_field_roots",
    "monotone_pieces",
    "optimal_histories",
    "optimal_momentum",
    "path_cost_b0",
    "pre_bad_intervals",
    "quadratic_energy",
    "sample_initial",
    "shoot",
    "simulate",
    "static_rate",
    "static_rate_slope",
    "t_ngs_closed",
    "thresholds_numeric",
    "transition_matrix",
    "transport",
]
