"""Classical offline adjoint descent: solve to convergence, then step theta.

Each iteration pays two full linear solves (forward and adjoint) before a
single explicit parameter update. The trace shares the online schema; the
cum_inner_iters column counts Krylov iterations, which is the cost proxy
contrasted with the online integrator's two operator applications per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import TraceRecord, check_schedule
from .elliptic import DiscreteOperator, adjoint
from .errors import (
    ConformabilityError,
    DivergenceError,
    ScheduleComplianceError,
)
from .linsolve import SolverConfig, solve_steady_info
from .mesh import inner_product, norm_l2
from .objective import TargetProfile, ThetaVector, fd_hessian
from .online import Schedule
from .source import SourceModel, eval_field

__all__ = ["OfflineRunConfig", "run_offline", "default_step_size"]


def default_step_size(
    op: DiscreteOperator,
    model: SourceModel,
    theta: ThetaVector,
    target: TargetProfile,
    solver: SolverConfig = SolverConfig(),
) -> float:
    """Constant step 1/L with L the largest Hessian eigenvalue at theta.

    For linear-basis sources the objective is quadratic and the finite
    difference Hessian is exact up to solver noise, so this is the standard
    smoothness step.
    """
    hess = fd_hessian(op, model, theta, target, solver)
    eigs = np.linalg.eigvalsh(hess)
    big_l = float(eigs.max())
    if not np.isfinite(big_l) or big_l <= 0:
        raise ValueError(f"Hessian estimate has no positive top eigenvalue (L = {big_l})")
    return 1.0 / big_l


@dataclass
class OfflineRunConfig:
    """Offline loop settings.

    ``schedule`` defaults to the constant step 1/L estimated at theta0.
    ``grad_tol`` stops the loop once the gradient norm falls below it;
    ``max_iters`` always caps the loop.
    """

    op: DiscreteOperator
    model: SourceModel
    target: TargetProfile
    theta0: ThetaVector
    max_iters: int = 200
    schedule: Schedule | None = None
    theta_star: np.ndarray | None = None
    grad_tol: float | None = None
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-10))
    allow_noncompliant: bool = False


def run_offline(cfg: OfflineRunConfig) -> TraceRecord:
    """Iterate theta <- theta - alpha_k * grad J(theta) with exact gradients.

    The t column is the iteration index. phi_norm and psi_norm are
    identically zero: the state is re-solved to convergence every iteration,
    which is precisely the cost the online scheme avoids. sup_norm tracks
    the steady state and adjoint norms plus the parameter norm so the
    boundedness diagnostic stays comparable across the two algorithms.
    """
    g = cfg.op.grid
    if cfg.target.h.grid != g:
        raise ConformabilityError("target grid does not match operator grid")
    if cfg.theta0.dim != cfg.model.dim_theta:
        raise ConformabilityError("theta0 size does not match the source model")
    if cfg.max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    sched = cfg.schedule
    if sched is None:
        sched = Schedule(
            "constant", default_step_size(cfg.op, cfg.model, cfg.theta0, cfg.target, cfg.solver)
        )
    elif sched.kind != "constant":
        report = check_schedule(sched, cfg.theta0.gamma)
        if report.failed and not cfg.allow_noncompliant:
            raise ScheduleComplianceError(
                f"offline schedule fails decay conditions {report.failed}"
            )

    op_adj = adjoint(cfg.op)
    gamma = cfg.theta0.gamma
    theta = cfg.theta0.values.copy()

    rows = {name: [] for name in (
        "t", "j", "grad_norm", "theta_err", "phi", "psi", "alpha", "sup", "cum")}
    thetas = []
    cum = 0.0

    for k in range(cfg.max_iters + 1):
        rhs = eval_field(cfg.model, g, theta)
        ustar, info_f = solve_steady_info(cfg.op, rhs, cfg.solver)
        resid = ustar - cfg.target.h
        uhstar, info_a = solve_steady_info(op_adj, resid, cfg.solver)
        cum += info_f.iterations + info_a.iterations

        grads = cfg.model.grad_values(g, theta)
        gvec = grads.T @ (g.quad_weights * uhstar.values) + gamma * theta
        j = 0.5 * inner_product(resid, resid) + 0.5 * gamma * float(theta @ theta)
        gnorm = float(np.linalg.norm(gvec))
        alpha = sched.alpha(float(k))

        rows["t"].append(float(k))
        rows["j"].append(j)
        rows["grad_norm"].append(gnorm)
        rows["theta_err"].append(
            float(np.linalg.norm(theta - cfg.theta_star))
            if cfg.theta_star is not None
            else np.nan
        )
        rows["phi"].append(0.0)
        rows["psi"].append(0.0)
        rows["alpha"].append(alpha)
        rows["sup"].append(norm_l2(ustar) + norm_l2(uhstar) + float(np.linalg.norm(theta)))
        rows["cum"].append(cum)
        thetas.append(theta.copy())

        if cfg.grad_tol is not None and gnorm <= cfg.grad_tol:
            break
        if k == cfg.max_iters:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            theta = theta - alpha * gvec
        if not np.all(np.isfinite(theta)):
            trace = _build(rows, thetas, diverged=True, step=k + 1)
            raise DivergenceError(k + 1, trace)

    return _build(rows, thetas)


def _build(rows, thetas, diverged: bool = False, step: int | None = None) -> TraceRecord:
    return TraceRecord(
        t=rows["t"],
        j=rows["j"],
        grad_norm=rows["grad_norm"],
        theta=np.vstack(thetas),
        theta_err=rows["theta_err"],
        phi_norm=rows["phi"],
        psi_norm=rows["psi"],
        alpha=rows["alpha"],
        sup_norm=rows["sup"],
        cum_inner_iters=rows["cum"],
        diverged=diverged,
        divergence_step=step,
    )
