"""Coupled explicit integration of state, adjoint state, and design parameters.

One explicit Euler step advances three things at once, every update reading
the pre-step values only (Jacobi ordering):

    u     <- u     + (f(x, theta) - A u) dt
    u_hat <- u_hat + ((u - h) - A' u_hat) dt
    theta <- theta - alpha(t) (<u_hat, df/dtheta> + gamma theta) dt

so a single pass over the grid replaces the solve-to-convergence inner loop
of the classical offline iteration. The step size is gated by an explicit
stability bound and the learning rate by closed-form decay checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .diagnostics import ScheduleComplianceReport, TraceRecord, check_schedule
from .elliptic import DiscreteOperator, adjoint, apply, sym_power_iteration
from .errors import (
    BoundaryDataError,
    ConformabilityError,
    DivergenceError,
    EstimationError,
    ScheduleComplianceError,
    StabilityError,
)
from .linsolve import SolverConfig, solve_steady_info
from .mesh import Field, inner_product, norm_l2
from .objective import TargetProfile, ThetaVector
from .source import LinearBasisSource, SourceModel, TanhBasisSource, eval_field

__all__ = [
    "Schedule",
    "StepSize",
    "OnlineState",
    "OnlineRunConfig",
    "cfl_bound",
    "online_step",
    "run_online",
]


_SCHED_CODES = {
    "inverse-linear": _kernels.SCHED_INVERSE_LINEAR,
    "constant": _kernels.SCHED_CONSTANT,
    "custom-power": _kernels.SCHED_POWER,
}

_KINDS = ("inverse-linear", "constant", "custom-power", "custom")


@dataclass(frozen=True)
class Schedule:
    """Learning rate alpha(t) from a small family with known decay behavior.

    Kinds
    -----
    inverse-linear : alpha(t) = c_alpha / (1 + t). The workhorse; satisfies
        all four decay conditions whenever gamma > 0.
    constant : alpha(t) = c_alpha. Diagnostics only (its square is not
        integrable); c_alpha = 0 is allowed here and freezes theta so the
        state relaxation can be observed on its own.
    custom-power : alpha(t) = c_alpha (1 + t)^(-exponent); the compliant
        range is exponent in (1/2, 1].
    custom : arbitrary callable ``fn(t)``; accepted but never verified.
    """

    kind: str = "inverse-linear"
    c_alpha: float = 1.0
    exponent: float = 1.0
    fn: object = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; pick from {_KINDS}")
        object.__setattr__(self, "c_alpha", float(self.c_alpha))
        object.__setattr__(self, "exponent", float(self.exponent))
        if self.kind == "custom":
            if not callable(self.fn):
                raise ValueError("custom schedules need a callable fn(t)")
            return
        if self.fn is not None:
            raise ValueError("fn is only meaningful for kind='custom'")
        if not np.isfinite(self.c_alpha) or not np.isfinite(self.exponent):
            raise ValueError("schedule constants must be finite")
        if self.kind == "constant":
            if self.c_alpha < 0:
                raise ValueError("constant schedule needs c_alpha >= 0")
        elif self.c_alpha <= 0:
            raise ValueError(f"{self.kind} schedule needs c_alpha > 0")

    def alpha(self, t):
        """Evaluate the rate at time t (scalar or array)."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "inverse-linear":
            out = self.c_alpha / (1.0 + t)
        elif self.kind == "constant":
            out = np.full_like(t, self.c_alpha)
        elif self.kind == "custom-power":
            out = self.c_alpha * (1.0 + t) ** (-self.exponent)
        else:
            out = np.asarray([float(self.fn(tv)) for tv in np.atleast_1d(t)])
            out = out.reshape(t.shape)
        return float(out) if out.ndim == 0 else out

    @property
    def kernel_code(self):
        """Integer code for the jitted stepper, or None for custom rates."""
        return _SCHED_CODES.get(self.kind)

    def compliance(self, gamma: float) -> ScheduleComplianceReport:
        return check_schedule(self, gamma)


def cfl_bound(op: DiscreteOperator, tol: float = 1e-9, seed: int = 0) -> float:
    """Largest stable explicit Euler step for du/dt = -A u.

    The symmetric part's top eigenvalue rho comes from a seeded power
    iteration; the skew part is bounded separately through its Gershgorin
    row radius omega. For a symmetric operator the bound is 2/rho; with
    advection it tightens to 2 rho / (rho^2 + omega^2), which keeps every
    eigenvalue a + ib (0 < a <= rho, |b| <= omega) inside the unit disk of
    the amplification factor |1 - dt (a + ib)|.
    """
    rho, _ = sym_power_iteration(op.symmetric_part(), tol=tol, seed=seed)
    rho = abs(rho)
    if rho <= 0:
        raise EstimationError("symmetric part has no positive spectral radius")
    skew = op.skew_part()
    omega = 0.0
    if skew.nnz:
        omega = float(np.max(np.abs(skew).sum(axis=1)))
    if omega == 0.0:
        return 2.0 / rho
    return 2.0 * rho / (rho * rho + omega * omega)


@dataclass(frozen=True)
class StepSize:
    """Explicit step with its stability budget.

    ``delta`` must stay at or below ``safety * cfl_limit``. Passing
    ``force=True`` downgrades a violation to a warning; running there is on
    the caller.
    """

    delta: float
    cfl_limit: float | None = None
    safety: float = 0.9
    force: bool = False

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise ValueError("step size must be positive and finite")
        if not 0 < self.safety <= 1:
            raise ValueError("safety factor must lie in (0, 1]")
        if self.cfl_limit is not None:
            object.__setattr__(self, "cfl_limit", float(self.cfl_limit))
            budget = self.safety * self.cfl_limit
            if self.delta > budget * (1 + 1e-12):
                msg = (
                    f"step {self.delta:.6e} exceeds {self.safety:g} * stability bound "
                    f"{self.cfl_limit:.6e}"
                )
                if not self.force:
                    raise StabilityError(msg)
                warnings.warn(msg + "; proceeding under force=True")

    @classmethod
    def from_operator(cls, op: DiscreteOperator, safety: float = 0.9) -> "StepSize":
        limit = cfl_bound(op)
        return cls(safety * limit, limit, safety)


@dataclass(frozen=True)
class OnlineState:
    """Snapshot of the coupled system between steps. ``t = step_count * dt``."""

    u: Field
    u_hat: Field
    theta: ThetaVector
    t: float = 0.0
    step_count: int = 0


def online_step(
    state: OnlineState,
    op: DiscreteOperator,
    op_adj: DiscreteOperator | None,
    model: SourceModel,
    target: TargetProfile,
    sched: Schedule,
    dt: StepSize,
) -> OnlineState:
    """One coupled explicit Euler step; reference implementation.

    Every update reads the pre-step state. Interior nodes only are written;
    boundary values ride along unchanged, so Dirichlet data set on the
    initial fields persists. Raises DivergenceError when the new state
    contains a non-finite value.
    """
    g = op.grid
    if state.u.grid != g or state.u_hat.grid != g or target.h.grid != g:
        raise ConformabilityError("state, target, and operator grids must agree")
    if state.theta.dim != model.dim_theta:
        raise ConformabilityError("theta size does not match the source model")
    if op_adj is None:
        op_adj = adjoint(op)
    delta = dt.delta if isinstance(dt, StepSize) else float(dt)

    u, uh, th = state.u, state.u_hat, state.theta
    ii = g.interior_indices
    # overflow here is legitimate input for the divergence guard below
    with np.errstate(over="ignore", invalid="ignore"):
        f_vals = model.field_values(g, th.values)
        u_new = u.values[ii] + delta * (f_vals[ii] - apply(op, u).values[ii])
        res = u.values[ii] - target.h.values[ii]
        uh_new = uh.values[ii] + delta * (res - apply(op_adj, uh).values[ii])

        grads = model.grad_values(g, th.values)
        w = g.quad_weights
        raw = grads.T @ (w * uh.values)
        alpha = sched.alpha(state.t)
        th_new = th.values - alpha * delta * (raw + th.gamma * th.values)

    k = state.step_count + 1
    if not (
        np.all(np.isfinite(u_new))
        and np.all(np.isfinite(uh_new))
        and np.all(np.isfinite(th_new))
    ):
        raise DivergenceError(k)
    return OnlineState(
        u=Field.from_interior(g, u_new, boundary=u),
        u_hat=Field.from_interior(g, uh_new, boundary=uh),
        theta=th.replace(th_new),
        t=k * delta,
        step_count=k,
    )


@dataclass
class OnlineRunConfig:
    """Everything one integration needs.

    ``log_stride`` is the number of steps between diagnostics rows (None
    picks roughly 1500 rows across the horizon). ``theta_star`` feeds the
    theta_err column; without it that column is NaN. ``allow_noncompliant``
    lets constant or otherwise failing schedules through for diagnostics.
    """

    op: DiscreteOperator
    model: SourceModel
    target: TargetProfile
    theta0: ThetaVector
    schedule: Schedule
    horizon: float
    step: StepSize | None = None
    log_stride: int | None = None
    theta_star: np.ndarray | None = None
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-10))
    u0: Field | None = None
    uhat0: Field | None = None
    allow_noncompliant: bool = False


def _gate_schedule(cfg: OnlineRunConfig) -> None:
    report = check_schedule(cfg.schedule, cfg.theta0.gamma)
    if report.failed:
        if not cfg.allow_noncompliant:
            raise ScheduleComplianceError(
                f"schedule fails decay conditions {report.failed}; "
                "pass allow_noncompliant=True to run it as a diagnostic"
            )
    elif not report.compliant:
        warnings.warn("custom schedule accepted without verification")


class _DiagnosticLogger:
    """Accumulates trace rows; each row costs one forward and one adjoint solve."""

    def __init__(self, cfg: OnlineRunConfig):
        self.cfg = cfg
        self.op_adj = adjoint(cfg.op)
        self.rows: dict[str, list] = {
            name: []
            for name in (
                "t",
                "j",
                "grad_norm",
                "theta_err",
                "phi_norm",
                "psi_norm",
                "alpha",
                "sup_norm",
                "cum",
            )
        }
        self.thetas: list[np.ndarray] = []

    def log(self, t: float, u: Field, uh: Field, theta: np.ndarray, steps_done: int):
        cfg = self.cfg
        g = cfg.op.grid
        rhs = eval_field(cfg.model, g, theta)
        ustar, _ = solve_steady_info(cfg.op, rhs, cfg.solver)
        resid = ustar - cfg.target.h
        uhstar, _ = solve_steady_info(self.op_adj, resid, cfg.solver)

        gamma = cfg.theta0.gamma
        j = 0.5 * inner_product(resid, resid) + 0.5 * gamma * float(theta @ theta)
        grads = cfg.model.grad_values(g, theta)
        gvec = grads.T @ (g.quad_weights * uhstar.values) + gamma * theta
        err = (
            float(np.linalg.norm(theta - cfg.theta_star))
            if cfg.theta_star is not None
            else np.nan
        )
        r = self.rows
        r["t"].append(t)
        r["j"].append(j)
        r["grad_norm"].append(float(np.linalg.norm(gvec)))
        r["theta_err"].append(err)
        r["phi_norm"].append(norm_l2(u - ustar))
        r["psi_norm"].append(norm_l2(uh - uhstar))
        r["alpha"].append(cfg.schedule.alpha(t))
        r["sup_norm"].append(norm_l2(u) + norm_l2(uh) + float(np.linalg.norm(theta)))
        r["cum"].append(2.0 * steps_done)
        self.thetas.append(theta.copy())

    def record(self, diverged: bool = False, divergence_step: int | None = None) -> TraceRecord:
        r = self.rows
        return TraceRecord(
            t=r["t"],
            j=r["j"],
            grad_norm=r["grad_norm"],
            theta=np.vstack(self.thetas),
            theta_err=r["theta_err"],
            phi_norm=r["phi_norm"],
            psi_norm=r["psi_norm"],
            alpha=r["alpha"],
            sup_norm=r["sup_norm"],
            cum_inner_iters=r["cum"],
            diverged=diverged,
            divergence_step=divergence_step,
        )


def _plan_steps(horizon: float, delta: float, log_stride: int | None):
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n_steps = int(np.ceil(horizon / delta - 1e-12))
    if log_stride is None:
        log_stride = max(1, n_steps // 1500)
    log_stride = int(log_stride)
    if log_stride < 1:
        raise ValueError("log_stride must be >= 1")
    marks = list(range(0, n_steps + 1, log_stride))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    return n_steps, marks


def run_online(cfg: OnlineRunConfig) -> TraceRecord:
    """Integrate the coupled system to the horizon, logging diagnostics rows.

    Rows land at step 0, every ``log_stride`` steps, and the final step. The
    trace carries the quadrature norms of the state lag u - u*(theta(t)) and
    the adjoint lag u_hat - u_hat*(theta(t)) (two conjugate-gradient solves
    per row), the steady-oracle objective and gradient norm, alpha(t), the
    boundedness proxy, and cumulative operator applications (2 per step) as
    the cost column. On a non-finite state the run aborts and the raised
    DivergenceError carries the rows logged so far.

    Identical configs produce bit-identical traces: stepping is jitted but
    sequential with a fixed summation order, and the diagnostic solves are
    deterministic.
    """
    g = cfg.op.grid
    if cfg.target.h.grid != g:
        raise ConformabilityError("target grid does not match operator grid")
    if cfg.theta0.dim != cfg.model.dim_theta:
        raise ConformabilityError("theta0 size does not match the source model")
    _gate_schedule(cfg)

    step = cfg.step if cfg.step is not None else StepSize.from_operator(cfg.op)
    delta = step.delta
    n_steps, marks = _plan_steps(cfg.horizon, delta, cfg.log_stride)

    u0 = cfg.u0 if cfg.u0 is not None else Field.zeros(g)
    uh0 = cfg.uhat0 if cfg.uhat0 is not None else Field.zeros(g)
    if u0.grid != g or uh0.grid != g:
        raise ConformabilityError("initial fields must live on the operator grid")

    fast = type(cfg.model) in (LinearBasisSource, TanhBasisSource) and (
        cfg.schedule.kernel_code is not None
    )
    if fast:
        if not (u0.is_homogeneous_dirichlet() and uh0.is_homogeneous_dirichlet()):
            raise BoundaryDataError(
                "the linear online path assumes homogeneous Dirichlet state fields"
            )
        return _run_linear(cfg, step, n_steps, marks, u0, uh0)
    return _run_generic(cfg, step, n_steps, marks, u0, uh0)


def _run_linear(cfg, step, n_steps, marks, u0, uh0) -> TraceRecord:
    g = cfg.op.grid
    ii = g.interior_indices
    delta = step.delta
    amat = cfg.op.matrix
    tmat = adjoint(cfg.op).matrix
    basis = cfg.model.basis_matrix(g)
    b_int = np.ascontiguousarray(basis[ii, :])
    wb_int = np.ascontiguousarray((g.quad_weights[:, None] * basis)[ii, :])
    h_int = np.ascontiguousarray(cfg.target.h.values[ii])
    model_code = (
        _kernels.MODEL_TANH
        if isinstance(cfg.model, TanhBasisSource)
        else _kernels.MODEL_LINEAR
    )

    u = u0.values[ii].copy()
    uh = uh0.values[ii].copy()
    theta = cfg.theta0.values.copy()
    gamma = cfg.theta0.gamma

    logger = _DiagnosticLogger(cfg)

    def as_field(interior):
        return Field.from_interior(g, interior)

    logger.log(0.0, as_field(u), as_field(uh), theta, 0)
    pos = 0
    for mark in marks[1:]:
        ret = _kernels.linear_online_chunk(
            u,
            uh,
            theta,
            pos,
            mark - pos,
            delta,
            amat.data,
            amat.indices,
            amat.indptr,
            tmat.data,
            tmat.indices,
            tmat.indptr,
            b_int,
            wb_int,
            h_int,
            gamma,
            model_code,
            cfg.schedule.kernel_code,
            cfg.schedule.c_alpha,
            cfg.schedule.exponent,
        )
        if ret != 0:
            bad = pos + ret
            trace = logger.record(diverged=True, divergence_step=bad)
            raise DivergenceError(bad, trace)
        pos = mark
        logger.log(pos * delta, as_field(u), as_field(uh), theta, pos)
    return logger.record()


def _run_generic(cfg, step, n_steps, marks, u0, uh0) -> TraceRecord:
    """Pure-python fallback for custom sources or rates; fine at small n."""
    op_adj = adjoint(cfg.op)
    state = OnlineState(u=u0, u_hat=uh0, theta=cfg.theta0)
    logger = _DiagnosticLogger(cfg)
    logger.log(0.0, state.u, state.u_hat, state.theta.values, 0)
    mark_set = set(marks)
    for k in range(1, n_steps + 1):
        try:
            state = online_step(
                state, cfg.op, op_adj, cfg.model, cfg.target, cfg.schedule, step
            )
        except DivergenceError as exc:
            trace = logger.record(diverged=True, divergence_step=exc.step_index)
            raise DivergenceError(exc.step_index, trace) from None
        if k in mark_set:
            logger.log(state.t, state.u, state.u_hat, state.theta.values, k)
    return logger.record()
