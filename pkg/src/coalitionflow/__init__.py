"""Robust dynamic coalitional TU games as a flow-control problem.

Library plus CLI: coalition/core machinery, the two feedback allocation
rules with their feasibility audits, stochastic game-value sources, the
flow simulator, and the convergence diagnostics.
"""

from .coalitions import (
    AllocationBounds,
    BalancednessError,
    CoalitionIndex,
    ExcessState,
    augmented_matrix,
    core_membership,
    core_violation,
    enumerate_coalitions,
    excess_update,
    incidence_matrix,
    is_balanced,
)
from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .controllers import (
    DiscreteApproachController,
    FeasibilityAudit,
    FullInfoController,
    PartialInfoController,
    StationaryController,
    discrete_approach_control,
    feasible_control_box,
    make_full,
    make_partial,
    oracle_sign,
    stationary_control,
)
from .diagnostics import (
    DiagnosticReport,
    approachability_stat,
    attainability_stat,
    build_report,
    lyapunov,
    lyapunov_trend,
    target_membership,
    window_means,
)
from .dynamics import (
    FeasibilityError,
    FlowDynamics,
    FlowState,
    KahanSum,
    SimConfig,
    TrajectoryRecord,
    run_discrete,
    run_trajectory,
    trial_rng,
)
from .experiment import run_experiment
from .linalg import (
    SystemMatrices,
    complete,
    right_pseudo_inverse,
    saturate,
    sign_vector,
)
from .sources import (
    FiniteSupportProcess,
    GameBox,
    GenerationError,
    SupplyChainGame,
    generate_support,
    sample,
    sample_indices,
    supply_chain_bounds,
    supply_chain_values,
)

__version__ = "0.1.0"
