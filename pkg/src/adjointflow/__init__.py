"""Online adjoint descent for steady PDE-constrained design.

The package couples three explicit relaxations run side by side: a forward
elliptic solve, its adjoint, and a gradient flow on the design parameters.
Diagnostics quantify how fast the coupled system tracks the offline
optimum, and a small CLI drives reproducible experiments.
"""

from .baseline import OfflineRunConfig, default_step_size, run_offline
from .burgers import (
    BurgersProblem,
    BurgersRunConfig,
    adjoint_residual,
    burgers_gradient,
    burgers_residual,
    run_burgers_online,
    solve_burgers_adjoint,
    solve_burgers_steady,
)
from .diagnostics import (
    RateFit,
    ScheduleComplianceReport,
    TraceRecord,
    check_schedule,
    fit_rate,
    ratio_bound,
    write_report,
)
from .elliptic import (
    CoercivityEstimate,
    DiscreteOperator,
    EllipticCoefficients,
    adjoint,
    apply,
    assemble,
    estimate_coercivity,
)
from .errors import (
    AdjointFlowError,
    BoundaryDataError,
    ConfigError,
    ConformabilityError,
    DissipativityError,
    DivergenceError,
    EllipticityError,
    EstimationError,
    FitError,
    NonConvergenceError,
    ScheduleComplianceError,
    StabilityError,
)
from .linsolve import SolveInfo, SolverConfig, solve_steady, solve_steady_info
from .mesh import (
    Field,
    Grid,
    inner_product,
    norm_l2,
    read_field_csv,
    sample_function,
    write_field_csv,
)
from .objective import (
    TargetProfile,
    ThetaVector,
    adjoint_gradient,
    fd_gradient,
    fd_hessian,
    gradient_and_value,
    objective_value,
)
from .online import (
    OnlineRunConfig,
    OnlineState,
    Schedule,
    StepSize,
    online_step,
    run_online,
)
from .source import (
    CallableSource,
    LinearBasisSource,
    SourceModel,
    TanhBasisSource,
    check_gradient,
    sine_basis,
)
from .stock import StockProblem, build_stock
from .svg import emit_svg, render_svg

__version__ = "0.1.0"

__all__ = [
    "AdjointFlowError",
    "BoundaryDataError",
    "BurgersProblem",
    "BurgersRunConfig",
    "CallableSource",
    "CoercivityEstimate",
    "ConfigError",
    "ConformabilityError",
    "DiscreteOperator",
    "DissipativityError",
    "DivergenceError",
    "EllipticCoefficients",
    "EllipticityError",
    "EstimationError",
    "Field",
    "FitError",
    "Grid",
    "LinearBasisSource",
    "NonConvergenceError",
    "OfflineRunConfig",
    "OnlineRunConfig",
    "OnlineState",
    "RateFit",
    "Schedule",
    "ScheduleComplianceError",
    "ScheduleComplianceReport",
    "SolveInfo",
    "SolverConfig",
    "SourceModel",
    "StabilityError",
    "StepSize",
    "StockProblem",
    "TanhBasisSource",
    "TargetProfile",
    "ThetaVector",
    "TraceRecord",
    "adjoint",
    "adjoint_gradient",
    "adjoint_residual",
    "apply",
    "assemble",
    "build_stock",
    "burgers_gradient",
    "burgers_residual",
    "check_gradient",
    "check_schedule",
    "default_step_size",
    "emit_svg",
    "estimate_coercivity",
    "fd_gradient",
    "fd_hessian",
    "fit_rate",
    "gradient_and_value",
    "inner_product",
    "norm_l2",
    "objective_value",
    "online_step",
    "ratio_bound",
    "read_field_csv",
    "render_svg",
    "run_burgers_online",
    "run_offline",
    "run_online",
    "sample_function",
    "sine_basis",
    "solve_burgers_adjoint",
    "solve_burgers_steady",
    "solve_steady",
    "solve_steady_info",
    "write_field_csv",
    "write_report",
]
