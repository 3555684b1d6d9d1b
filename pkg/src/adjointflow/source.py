"""Parametrized source terms f(x, theta) and their theta-derivatives.

Two concrete families cover the experiments: a linear combination of basis
fields, and the same combination with each coefficient squashed through
tanh so the source and all its theta-derivatives stay globally bounded.
Custom models plug in through :class:`CallableSource`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Field, Grid, norm_l2, sample_function

__all__ = [
    "SourceModel",
    "LinearBasisSource",
    "TanhBasisSource",
    "CallableSource",
    "sine_basis",
    "eval_field",
    "grad_field",
    "bound_report",
    "check_gradient",
    "SourceBoundReport",
]


class SourceModel:
    """Base class: a source term with ``dim_theta`` real parameters."""

    def __init__(self, dim_theta: int):
        if int(dim_theta) < 1:
            raise ValueError("a source model needs at least one parameter")
        self.dim_theta = int(dim_theta)

    # subclasses implement values/grad on full node sets
    def field_values(self, grid: Grid, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_values(self, grid: Grid, theta: np.ndarray) -> np.ndarray:
        """Shape (n_nodes, dim_theta): d f / d theta_k sampled at nodes."""
        raise NotImplementedError

    def hess_values(self, grid: Grid, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Shape (n_nodes, d, d); default central differences of the gradient."""
        d = self.dim_theta
        theta = _as_theta(theta, d)
        out = np.empty((grid.n_nodes, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            gp = self.grad_values(grid, theta + e)
            gm = self.grad_values(grid, theta - e)
            out[:, :, j] = (gp - gm) / (2 * step)
        return 0.5 * (out + np.swapaxes(out, 1, 2))


def _as_theta(theta, d: int) -> np.ndarray:
    t = np.asarray(theta, dtype=np.float64).ravel()
    if t.size != d:
        raise ValueError(f"theta must have {d} entries, got {t.size}")
    return t


class _BasisSource(SourceModel):
    def __init__(self, basis_fns):
        fns = list(basis_fns)
        super().__init__(len(fns))
        self._fns = fns
        self._matrices: dict[Grid, np.ndarray] = {}

    def basis_matrix(self, grid: Grid) -> np.ndarray:
        """Node samples of the basis fields, shape (n_nodes, dim_theta). Cached."""
        mat = self._matrices.get(grid)
        if mat is None:
            mat = np.column_stack([sample_function(grid, fn).values for fn in self._fns])
            mat.setflags(write=False)
            self._matrices[grid] = mat
        return mat


class LinearBasisSource(_BasisSource):
    """f(x, theta) = sum_k theta_k phi_k(x)."""

    def field_values(self, grid, theta):
        theta = _as_theta(theta, self.dim_theta)
        return self.basis_matrix(grid) @ theta

    def grad_values(self, grid, theta):
        _as_theta(theta, self.dim_theta)
        return self.basis_matrix(grid).copy()

    def hess_values(self, grid, theta, step: float = 1e-5):
        d = self.dim_theta
        return np.zeros((grid.n_nodes, d, d))


class TanhBasisSource(_BasisSource):
    """f(x, theta) = sum_k tanh(theta_k) phi_k(x); bounded in theta."""

    def field_values(self, grid, theta):
        theta = _as_theta(theta, self.dim_theta)
        return self.basis_matrix(grid) @ np.tanh(theta)

    def grad_values(self, grid, theta):
        theta = _as_theta(theta, self.dim_theta)
        sech2 = 1.0 / np.cosh(theta) ** 2
        return self.basis_matrix(grid) * sech2[None, :]

    def hess_values(self, grid, theta, step: float = 1e-5):
        theta = _as_theta(theta, self.dim_theta)
        d = self.dim_theta
        diag = -2.0 * np.tanh(theta) / np.cosh(theta) ** 2
        out = np.zeros((grid.n_nodes, d, d))
        B = self.basis_matrix(grid)
        for k in range(d):
            out[:, k, k] = B[:, k] * diag[k]
        return out


class CallableSource(SourceModel):
    """Custom source from pointwise callables.

    ``fn(x..., theta)`` returns the source value at one point; ``grad_fn``
    returns the length-d gradient there. Without ``grad_fn`` the gradient
    falls back to central differences of ``fn``.
    """

    def __init__(self, dim_theta: int, fn, grad_fn=None, fd_step: float = 1e-6):
        super().__init__(dim_theta)
        self._fn = fn
        self._grad_fn = grad_fn
        self._fd_step = float(fd_step)

    def field_values(self, grid, theta):
        theta = _as_theta(theta, self.dim_theta)
        return sample_function(grid, lambda *x: self._fn(*x, theta)).values

    def grad_values(self, grid, theta):
        theta = _as_theta(theta, self.dim_theta)
        d = self.dim_theta
        if self._grad_fn is not None:
            out = np.empty((grid.n_nodes, d))
            for i, pt in enumerate(grid.coords):
                out[i, :] = np.asarray(self._grad_fn(*pt, theta), dtype=np.float64)
            return out
        out = np.empty((grid.n_nodes, d))
        s = self._fd_step
        for k in range(d):
            e = np.zeros(d)
            e[k] = s
            fp = self.field_values(grid, theta + e)
            fm = self.field_values(grid, theta - e)
            out[:, k] = (fp - fm) / (2 * s)
        return out


def sine_basis(d: int):
    """First ``d`` interval sine modes, phi_k(x) = sin(k pi x)."""
    return [lambda x, k=k: np.sin(k * np.pi * x) for k in range(1, d + 1)]


def eval_field(model: SourceModel, grid: Grid, theta) -> Field:
    """Sample f(., theta) on the grid."""
    return Field(grid, model.field_values(grid, theta))


def grad_field(model: SourceModel, grid: Grid, theta) -> list[Field]:
    """Per-parameter derivative fields [df/dtheta_k]."""
    g = model.grad_values(grid, theta)
    return [Field(grid, g[:, k]) for k in range(model.dim_theta)]


@dataclass(frozen=True)
class SourceBoundReport:
    """Advisory sup bounds over a probe set (L2 norms in x)."""

    sup_value: float
    sup_grad: float
    sup_hess: float
    n_probes: int


def bound_report(model: SourceModel, grid: Grid, theta_probes) -> SourceBoundReport:
    """Max L2 norms of f, grad f, hess f over the probe thetas."""
    w = grid.quad_weights
    sup_v = sup_g = sup_h = 0.0
    count = 0
    for theta in theta_probes:
        count += 1
        v = model.field_values(grid, theta)
        sup_v = max(sup_v, float(np.sqrt(np.dot(w * v, v))))
        g = model.grad_values(grid, theta)
        sup_g = max(sup_g, float(np.sqrt(np.sum(w[:, None] * g * g))))
        h = model.hess_values(grid, theta)
        sup_h = max(sup_h, float(np.sqrt(np.sum(w[:, None, None] * h * h))))
    if count == 0:
        raise ValueError("bound_report needs at least one probe theta")
    return SourceBoundReport(sup_v, sup_g, sup_h, count)


def check_gradient(
    model: SourceModel, grid: Grid, theta, step: float = 1e-5
) -> float:
    """Max relative L2 mismatch between grad_values and central differences."""
    theta = _as_theta(theta, model.dim_theta)
    g = model.grad_values(grid, theta)
    worst = 0.0
    for k in range(model.dim_theta):
        e = np.zeros(model.dim_theta)
        e[k] = step
        fd = (model.field_values(grid, theta + e) - model.field_values(grid, theta - e)) / (
            2 * step
        )
        num = np.linalg.norm(fd - g[:, k])
        den = max(np.linalg.norm(g[:, k]), 1e-30)
        worst = max(worst, float(num / den))
    return worst
