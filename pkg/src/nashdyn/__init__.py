"""Solvers for local (generalized) Nash equilibria of smooth two-player
zero-sum games via second-order dynamics, with baselines, fixed-point
classification, and a benchmark CLI."""

from .classify import (
    FixedPointReport,
    RateEstimate,
    SmoothnessConstants,
    check_boundary_gne,
    classify_unconstrained,
    dnd_map_radius,
    estimate_rate,
    measure_constants,
)
from .constrained import (
    Ball,
    Box,
    ConvexSet,
    Halfspace,
    IntersectionSet,
    ProductSet,
    Simplex,
    locate,
    make_set,
    project,
    project_onto_vector,
)
from .constrained import run_second as run_second_constrained
from .dynamics import (
    ArmijoResult,
    CespParams,
    IterateTrace,
    LssParams,
    PerturbParams,
    SolverConfig,
    TraceStep,
    armijo_search,
    cesp_step,
    continuous_rhs,
    dnd_step,
    gda_step,
    integrate_euler,
    lss_step,
    lss_two_timescale_step,
    run,
    run_second,
    time_varying_perturbation,
)
from .errors import ConfigError, EvaluationError, NumericError, SetError
from .game import (
    FdReport,
    GameOracle,
    JointPoint,
    eval_jacobian,
    eval_omega,
    eval_value,
    fd_check,
    make_builtin,
)
from .spectral import (
    BlockEigs,
    RegularizerParams,
    build_beta,
    build_gn_metric,
    extreme_block_eigs,
    gershgorin_regularizer,
    spectral_radius,
)

__version__ = "0.1.0"
