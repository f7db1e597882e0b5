"""Steady-state Gaussian entanglement of two coupled oscillators under LQG feedback.

The package builds the normal-mode state-space model of two directly coupled,
continuously measured mechanical oscillators, solves the steady-state Kalman
filter and linear quadratic regulator, and quantifies entanglement of the
conditional and unconditional Gaussian states, including phase-diagram sweeps
over coupling strength and detection efficiency.
"""

__version__ = "0.1.0"

from .control import ClosedLoop, closed_loop, kalman_gain, lqr_gain, uncond_asymptotic
from .entanglement import (
    ApproxLogNegativity,
    ConditionalThresholds,
    EntanglementReport,
    cost_matrix,
    default_epr_theta,
    epr_variance,
    log_negativity,
    log_negativity_bare_oracle,
    log_negativity_general,
    logneg_approx,
    threshold_conditional,
    to_bare_basis,
    to_normal_basis,
)
from .errors import (
    ConfigError,
    ControllabilityError,
    ConvergenceError,
    InputError,
    InternalError,
    LqgentError,
    SolverError,
    StabilityError,
    SweepError,
)
from .model import (
    FeedbackConfig,
    FeedbackMode,
    InteractionSpec,
    PhysicalParams,
    StateSpaceModel,
    build_model,
    controllability_matrix,
    coulomb_constant,
    coupling_rate,
    is_controllable,
    is_observable,
    mode_transform,
    observability_matrix,
    symplectic_form,
)
from .solvers import (
    Basis,
    CovMatrix,
    RiccatiSolution,
    closed_form_conditional,
    solve_care,
    solve_control_care,
    solve_filter_care,
    solve_lyapunov,
    symplectic_eigenvalues,
)
from .sweep import (
    GridSpec,
    SweepResult,
    SweepSpec,
    entangled_cell_count,
    extract_boundary,
    run_sweep,
    write_sweep_csv,
    write_sweep_json,
)
from .trajectory import (
    EnsembleStats,
    TrajectoryConfig,
    TrajectoryRecord,
    ensemble_covariance,
    simulate,
    write_trajectory_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
