"""Continuous-time optimization flows with finite- and fixed-time settling
guarantees, plus the machinery to verify those guarantees numerically."""

from .analysis import (
    LyapunovCheckReport,
    SettlingBound,
    bound_T1,
    bound_T2,
    bound_T3,
    bound_Tineq,
    bound_TNM,
    bound_Tp_finite,
    bound_TSP,
    check_lyapunov_inequality,
    generic_finite_bound,
    generic_fixed_bound,
)
from .flows import (
    FlowField,
    FlowParams,
    SingularHessian,
    build_dual_ascent_flow,
    build_fixed_time_flow,
    build_gradient_flow,
    build_newton_fixed_time_flow,
    build_p_flow,
    build_primal_flow_at_nu,
    build_saddle_newton_flow,
    rescaled_direction,
)
from .harness import (
    ConfigError,
    ExperimentReport,
    ExperimentSpec,
    load_spec,
    run_experiment,
    solve_constrained,
    solve_saddle,
)
from .integrate import (
    IntegratorConfig,
    NonFiniteState,
    Trajectory,
    integrate,
    settle_time_sweep,
)
from .numerics import (
    NoConvergence,
    SingularMatrix,
    finite_diff_gradient,
    finite_diff_hessian,
    lu_solve,
    min_eigenvalue_symmetric,
)
from .problems import (
    ConstrainedProblem,
    MissingOptimum,
    ObjectiveProblem,
    SaddleProblem,
    catalog,
    constrained_as_saddle,
    dual_function_gradient,
    dual_function_value,
    estimate_pl_constant,
    full_saddle_hessian,
    lagrangian_gradient_x,
    saddle_catalog,
)

__version__ = "0.1.0"
