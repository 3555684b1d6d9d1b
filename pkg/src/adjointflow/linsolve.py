"""Steady linear solves against assembled operators.

Thin, contract-enforcing wrapper over scipy's Krylov solvers: conjugate
gradients when the operator equals its adjoint, BiCGStab otherwise, and an
explicit relative-residual check after the fact. A solve either meets the
requested tolerance or raises; it never returns silently inaccurate output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab, cg

from .errors import ConformabilityError, NonConvergenceError
from .mesh import Field
from .elliptic import DiscreteOperator

__all__ = ["SolverConfig", "SolveInfo", "solve_steady", "solve_steady_info"]

_METHODS = {
    "auto": "auto",
    "cg": "conjugate-gradient",
    "conjugate-gradient": "conjugate-gradient",
    "bicgstab": "bicgstab",
}


@dataclass(frozen=True)
class SolverConfig:
    """Iterative solver settings.

    method : "auto" picks conjugate gradients for self-adjoint operators and
        BiCGStab otherwise. Requesting "conjugate-gradient" on an operator
        that is not self-adjoint is an error.
    tol : relative residual target, ``|A u - rhs| / |rhs|`` in the Euclidean
        norm on interior unknowns.
    max_iter : iteration cap; defaults to ``10 * n_dof`` when None.
    precondition : "none" or "jacobi" (diagonal scaling).
    """

    method: str = "auto"
    tol: float = 1e-10
    max_iter: int | None = None
    precondition: str = "none"

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not (0 < self.tol < 1):
            raise ValueError("tol must lie in (0, 1)")
        if self.precondition not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.precondition!r}")


@dataclass(frozen=True)
class SolveInfo:
    method: str
    iterations: int
    residual: float


def _resolve_method(op: DiscreteOperator, cfg: SolverConfig) -> str:
    want = _METHODS[cfg.method]
    if want == "auto":
        return "conjugate-gradient" if op.is_symmetric else "bicgstab"
    if want == "conjugate-gradient" and not op.is_symmetric:
        raise ValueError(
            "conjugate-gradient requested but operator does not equal its adjoint"
        )
    return want


def solve_steady_info(
    op: DiscreteOperator,
    rhs: Field,
    cfg: SolverConfig = SolverConfig(),
    boundary: Field | None = None,
) -> tuple[Field, SolveInfo]:
    """Solve ``L u = rhs`` with Dirichlet data; return the field and solve stats.

    ``boundary`` supplies nonhomogeneous Dirichlet values (only its boundary
    nodes are read); omitted means homogeneous. The interior right-hand side
    is reduced by the boundary coupling before the Krylov solve.
    """
    g = op.grid
    if rhs.grid != g:
        raise ConformabilityError("rhs grid does not match operator grid")
    if boundary is not None and boundary.grid != g:
        raise ConformabilityError("boundary grid does not match operator grid")

    b = rhs.values[g.interior_indices].copy()
    if boundary is not None:
        b -= op.boundary_coupling @ boundary.values[g.boundary_indices]

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        u = Field.from_interior(g, np.zeros(op.n_dof), boundary=boundary)
        return u, SolveInfo(_resolve_method(op, cfg), 0, 0.0)

    method = _resolve_method(op, cfg)
    max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * op.n_dof

    M = None
    if cfg.precondition == "jacobi":
        d = op.matrix.diagonal()
        if np.any(d == 0):
            raise ValueError("jacobi preconditioning needs a zero-free diagonal")
        inv = 1.0 / d
        M = LinearOperator(op.matrix.shape, matvec=lambda x: inv * x)

    count = {"n": 0}

    def _cb(_xk):
        count["n"] += 1

    solver = cg if method == "conjugate-gradient" else bicgstab
    x, info = solver(
        op.matrix, b, rtol=cfg.tol * 0.1, atol=0.0, maxiter=max_iter, M=M, callback=_cb
    )

    res = float(np.linalg.norm(op.matrix @ x - b)) / b_norm
    if not np.all(np.isfinite(x)) or res > cfg.tol:
        raise NonConvergenceError(res if np.isfinite(res) else np.inf, count["n"])

    u = Field.from_interior(g, x, boundary=boundary)
    return u, SolveInfo(method, count["n"], res)


def solve_steady(
    op: DiscreteOperator,
    rhs: Field,
    cfg: SolverConfig = SolverConfig(),
    boundary: Field | None = None,
) -> Field:
    """Like :func:`solve_steady_info` but returns only the solution field."""
    u, _ = solve_steady_info(op, rhs, cfg, boundary)
    return u
