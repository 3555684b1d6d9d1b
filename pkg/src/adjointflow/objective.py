"""Tracking objective over design parameters and its adjoint-based gradient.

    J(theta) = 1/2 |u(theta) - h|^2 + gamma/2 |theta|^2

where u(theta) solves the steady problem L u = f(., theta) with homogeneous
Dirichlet data and h is the target profile. The gradient is assembled from
one forward and one adjoint steady solve; because the discrete adjoint is
the exact matrix transpose and interior quadrature weights are uniform,
this gradient is exact for the discrete objective up to solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import DiscreteOperator, adjoint
from .errors import ConformabilityError
from .linsolve import SolveInfo, SolverConfig, solve_steady_info
from .mesh import Field, inner_product
from .source import SourceModel, eval_field, grad_field

__all__ = [
    "ThetaVector",
    "TargetProfile",
    "objective_value",
    "adjoint_gradient",
    "gradient_and_value",
    "fd_gradient",
    "fd_hessian",
]


@dataclass(frozen=True)
class ThetaVector:
    """Design parameters plus the Tikhonov weight used to score them."""

    values: np.ndarray
    gamma: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel().copy()
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise ValueError("theta must be a nonempty finite vector")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def dim(self) -> int:
        return self.values.size

    def replace(self, values: np.ndarray) -> "ThetaVector":
        return ThetaVector(values, self.gamma)


@dataclass(frozen=True)
class TargetProfile:
    """Observed/target state the steady solution should match."""

    h: Field


def _check(op: DiscreteOperator, model: SourceModel, theta: ThetaVector, target: TargetProfile):
    if target.h.grid != op.grid:
        raise ConformabilityError("target grid does not match operator grid")
    if theta.dim != model.dim_theta:
        raise ConformabilityError(
            f"theta has {theta.dim} entries but model expects {model.dim_theta}"
        )


def objective_value(
    op: DiscreteOperator,
    model: SourceModel,
    theta: ThetaVector,
    target: TargetProfile,
    solver: SolverConfig = SolverConfig(),
) -> float:
    _check(op, model, theta, target)
    u, _ = solve_steady_info(op, eval_field(model, op.grid, theta.values), solver)
    r = u - target.h
    misfit = 0.5 * inner_product(r, r)
    return misfit + 0.5 * theta.gamma * float(np.dot(theta.values, theta.values))


def gradient_and_value(
    op: DiscreteOperator,
    model: SourceModel,
    theta: ThetaVector,
    target: TargetProfile,
    solver: SolverConfig = SolverConfig(),
) -> tuple[np.ndarray, float, list[SolveInfo]]:
    """Gradient of J, its value, and the solve stats behind them.

    One forward solve for u(theta), one transposed solve for the adjoint
    state, then one quadrature pairing per parameter.
    """
    _check(op, model, theta, target)
    u, info_f = solve_steady_info(op, eval_field(model, op.grid, theta.values), solver)
    r = u - target.h
    uhat, info_a = solve_steady_info(adjoint(op), r, solver)
    grads = grad_field(model, op.grid, theta.values)
    g = np.array([inner_product(uhat, gk) for gk in grads])
    g += theta.gamma * theta.values
    value = 0.5 * inner_product(r, r) + 0.5 * theta.gamma * float(
        np.dot(theta.values, theta.values)
    )
    return g, value, [info_f, info_a]


def adjoint_gradient(
    op: DiscreteOperator,
    model: SourceModel,
    theta: ThetaVector,
    target: TargetProfile,
    solver: SolverConfig = SolverConfig(),
) -> np.ndarray:
    """Gradient of J at theta via one forward and one adjoint solve."""
    g, _, _ = gradient_and_value(op, model, theta, target, solver)
    return g


def fd_gradient(
    op: DiscreteOperator,
    model: SourceModel,
    theta: ThetaVector,
    target: TargetProfile,
    solver: SolverConfig = SolverConfig(),
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of J; the independent check route.

    Costs two steady solves per parameter. Exists to validate
    :func:`adjoint_gradient`, so it deliberately shares no adjoint code.
    """
    _check(op, model, theta, target)
    d = theta.dim
    out = np.empty(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        jp = objective_value(op, model, theta.replace(theta.values + e), target, solver)
        jm = objective_value(op, model, theta.replace(theta.values - e), target, solver)
        out[k] = (jp - jm) / (2 * step)
    return out


def fd_hessian(
    op: DiscreteOperator,
    model: SourceModel,
    theta: ThetaVector,
    target: TargetProfile,
    solver: SolverConfig = SolverConfig(),
    step: float = 1e-4,
) -> np.ndarray:
    """Symmetrized central-difference Hessian of J (d x d, via the gradient)."""
    d = theta.dim
    H = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        gp = adjoint_gradient(op, model, theta.replace(theta.values + e), target, solver)
        gm = adjoint_gradient(op, model, theta.replace(theta.values - e), target, solver)
        H[:, j] = (gp - gm) / (2 * step)
    return 0.5 * (H + H.T)
