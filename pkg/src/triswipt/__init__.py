"""Transmissive-RIS SWIPT beamformer design toolkit."""

from .system import (
    SystemConfig,
    ChannelSet,
    SelectionOperators,
    QuadFormCache,
    BlockOuter,
    stack_channels,
    build_selection_operators,
    build_quadform_cache,
)
from .channel import (
    ScenarioParams,
    UserPlacement,
    dbm_to_watt,
    watt_to_dbm,
    pathloss_gain,
    place_users,
    draw_channels,
)
from .metrics import (
    BeamformerPair,
    LiftedPair,
    DcGradients,
    NumericalPSDError,
    lift,
    per_antenna_power,
    per_antenna_power_all,
    sinr,
    rate,
    sum_rate,
    harvested_energy,
    rate_lifted,
    sum_rate_lifted,
    harvest_lifted,
    dc_parts,
    dc_gradient,
    sca_rate_bound,
    penalty_terms,
    principal_eigvec,
    spectral_residual,
    nuclear_norm,
)
from .subproblem import (
    LogTerm,
    TraceConstraint,
    SubproblemData,
    build_subproblem,
    power_harvest_constraints,
)
from .solver import (
    SolverSettings,
    SolveReport,
    Phase1Result,
    TraceRecord,
    phase1_feasible,
    solve,
)
from .optimizer import (
    InfeasibleScenarioError,
    RankOneNotReachedError,
    NumericalFailureError,
    PenaltySchedule,
    IterateState,
    RunResult,
    TRAJECTORY_HEADER,
    penalty_schedule_step,
    trajectory_csv,
    initialize,
    extract_rank_one,
    calibrated_schedule,
    run,
    max_total_harvest,
)
from .oracle import (
    OracleResult,
    PGReport,
    LiftCheckReport,
    brute_force_best,
    lift_equivalence_check,
    projected_gradient_solve,
    single_user_mrt_rate,
)
from .experiments import (
    ExperimentConfig,
    TrialRecord,
    ConvergenceResult,
    SweepResult,
    desk_system,
    config_from_json,
    config_to_json,
    run_convergence,
    run_power_sweep,
    run_distance_sweep,
    execute,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
