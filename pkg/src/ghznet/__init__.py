"""Simulator for 2D quantum repeater networks distributing GHZ states.

Three mutually cross-checking engines share one channel layer:

- exact static propagation of truncated Fock-space density operators,
- Monte Carlo sampling of heralded trajectories with memory decay,
- a Laplace-domain recursion for decay-averaged fidelity and rate.
"""

__version__ = "0.1.0"

from .fock import (
    DensityOperator,
    ModeSpace,
    PureState,
    SpaceMismatchError,
    StateValidationError,
    partial_trace,
    project,
    tensor,
)
from .channels import (
    ImperfectionSet,
    Superoperator,
    beamsplitter,
    dark_count_channel,
    detection_channel,
    loss_channel,
    memory_decay,
    merge,
    node_b_gate,
)
from .elementary import (
    AnalyticElementary,
    ElementaryResult,
    EpsilonOptimum,
    analytic_elementary,
    generate_elementary,
    optimal_epsilon,
    optimize_epsilon_numeric,
    two_mode_squeezed,
)
from .analysis import (
    GhzBasisWeights,
    analytic_benchmark_state,
    analytic_infidelity,
    classically_correlated_state,
    distillable,
    fidelity,
    ghz_basis_weights,
    ghz_state,
    maximally_mixed_state,
    memory_count,
    qubit_project,
    swap_count,
)
from .network import (
    CANONICAL_ORIENTATION,
    MergeEvent,
    NetworkSpec,
    StaticRun,
    build_schedule,
    optimize_orientation,
    run_static,
)
from .montecarlo import (
    McEstimate,
    TrajectoryConfig,
    estimate,
    run_trajectory,
    sample_elementary,
)
from .laplace import (
    DecayGenerator,
    LaplaceDivergenceError,
    LaplaceDual,
    LevelImage,
    OperatorMixture,
    RateMixture,
    close_geometric,
    pair_image,
    recurse_levels,
    single_image,
)

__all__ = [
    "DensityOperator",
    "ModeSpace",
    "PureState",
    "SpaceMismatchError",
    "StateValidationError",
    "partial_trace",
    "project",
    "tensor",
    "ImperfectionSet",
    "Superoperator",
    "beamsplitter",
    "dark_count_channel",
    "detection_channel",
    "loss_channel",
    "memory_decay",
    "merge",
    "node_b_gate",
    "AnalyticElementary",
    "ElementaryResult",
    "EpsilonOptimum",
    "analytic_elementary",
    "generate_elementary",
    "optimal_epsilon",
    "optimize_epsilon_numeric",
    "two_mode_squeezed",
    "GhzBasisWeights",
    "analytic_benchmark_state",
    "analytic_infidelity",
    "classically_correlated_state",
    "distillable",
    "fidelity",
    "ghz_basis_weights",
    "ghz_state",
    "maximally_mixed_state",
    "memory_count",
    "qubit_project",
    "swap_count",
    "CANONICAL_ORIENTATION",
    "MergeEvent",
    "NetworkSpec",
    "StaticRun",
    "build_schedule",
    "optimize_orientation",
    "run_static",
    "McEstimate",
    "TrajectoryConfig",
    "estimate",
    "run_trajectory",
    "sample_elementary",
    "DecayGenerator",
    "LaplaceDivergenceError",
    "LaplaceDual",
    "LevelImage",
    "OperatorMixture",
    "RateMixture",
    "close_geometric",
    "pair_image",
    "recurse_levels",
    "single_image",
    "__version__",
]
