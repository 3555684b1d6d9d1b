"""Second-order finite-difference discretization of divergence-form operators.

The operator is

    L u = -sum_ij d_j(a_ij(x) d_i u) + sum_i b_i(x) d_i u + c(x) u

on the grid interior with Dirichlet boundary rows eliminated: the assembled
object holds an interior-by-interior sparse matrix plus an explicit
interior-by-boundary coupling block, so applying it to a field that carries
boundary data accounts for that data exactly. The discrete adjoint is the
exact matrix transpose, which keeps adjoint-based gradients consistent with
the discrete objective to solver precision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg as _cg

from .errors import (
    ConformabilityError,
    DissipativityError,
    EllipticityError,
    EstimationError,
)
from .mesh import Field, Grid, sample_function

__all__ = [
    "EllipticCoefficients",
    "DiscreteOperator",
    "CoercivityEstimate",
    "assemble",
    "apply",
    "adjoint",
    "estimate_coercivity",
    "sym_power_iteration",
    "dump_matrix_market",
]


@dataclass(frozen=True)
class EllipticCoefficients:
    """Coefficient bundle for the divergence-form operator.

    Parameters
    ----------
    a : None, float, callable, pair, or 2x2 nest
        Diffusion tensor. ``None`` means identity. A scalar or scalar
        function means an isotropic tensor. In 2D a pair gives the diagonal
        and a 2x2 nest (constants or callables) gives the full symmetric
        tensor; the (0,1) and (1,0) entries must agree.
    b : None, scalar, or per-axis tuple
        Advection velocity, constants or callables per axis.
    c : None, float, or callable
        Reaction coefficient. Nonnegativity is advisory: negative samples
        trigger a warning, not an error.
    """

    a: object = None
    b: object = None
    c: object = None

    @classmethod
    def poisson(cls) -> "EllipticCoefficients":
        return cls()


def _sample(grid: Grid, coeff) -> np.ndarray:
    if coeff is None:
        return np.zeros(grid.n_nodes)
    if callable(coeff):
        return sample_function(grid, coeff).values
    return np.full(grid.n_nodes, float(coeff))


def _sample_diffusion(grid: Grid, a) -> np.ndarray:
    """Return node samples of the diffusion tensor, shape (n_nodes, dim, dim)."""
    d = grid.dim
    out = np.zeros((grid.n_nodes, d, d))
    if a is None:
        for k in range(d):
            out[:, k, k] = 1.0
        return out
    if callable(a) or np.isscalar(a):
        iso = _sample(grid, a)
        for k in range(d):
            out[:, k, k] = iso
        return out
    entries = list(a)
    if d == 1:
        out[:, 0, 0] = _sample(grid, entries[0])
        return out
    if len(entries) == 2 and not isinstance(entries[0], (list, tuple)):
        out[:, 0, 0] = _sample(grid, entries[0])
        out[:, 1, 1] = _sample(grid, entries[1])
        return out
    out[:, 0, 0] = _sample(grid, entries[0][0])
    out[:, 0, 1] = _sample(grid, entries[0][1])
    out[:, 1, 0] = _sample(grid, entries[1][0])
    out[:, 1, 1] = _sample(grid, entries[1][1])
    if not np.allclose(out[:, 0, 1], out[:, 1, 0], rtol=0, atol=1e-14):
        raise EllipticityError("diffusion tensor must be symmetric: a01 != a10")
    return out


def _sample_advection(grid: Grid, b) -> np.ndarray:
    d = grid.dim
    out = np.zeros((grid.n_nodes, d))
    if b is None:
        return out
    if callable(b) or np.isscalar(b):
        if d != 1:
            raise ConformabilityError("2D advection must be given per axis")
        out[:, 0] = _sample(grid, b)
        return out
    entries = list(b)
    if len(entries) != d:
        raise ConformabilityError(f"advection needs {d} components, got {len(entries)}")
    for k, e in enumerate(entries):
        out[:, k] = _sample(grid, e)
    return out


def _check_ellipticity(grid: Grid, a: np.ndarray) -> None:
    if grid.dim == 1:
        bad = np.flatnonzero(a[:, 0, 0] <= 0)
    else:
        det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        bad = np.flatnonzero((a[:, 0, 0] <= 0) | (det <= 0))
    if bad.size:
        pt = grid.coords[bad[0]]
        raise EllipticityError(
            f"diffusion tensor not positive definite at node {tuple(pt)}"
        )


class DiscreteOperator:
    """Assembled finite-difference operator on a grid's interior nodes.

    Attributes
    ----------
    grid : Grid
    matrix : scipy.sparse.csr_matrix
        Interior-to-interior block, shape (n_int, n_int).
    boundary_coupling : scipy.sparse.csr_matrix
        Interior-to-boundary block, shape (n_int, n_boundary); columns follow
        ``grid.boundary_indices`` order. The adjoint carries this block
        unchanged (adjoint solves use homogeneous data).
    is_symmetric : bool
        True when the interior block equals its transpose entrywise.
    """

    def __init__(self, grid: Grid, matrix, boundary_coupling, is_adjoint: bool = False):
        self.grid = grid
        self.matrix = sp.csr_matrix(matrix)
        self.boundary_coupling = sp.csr_matrix(boundary_coupling)
        n_int = grid.n_interior_nodes
        if self.matrix.shape != (n_int, n_int):
            raise ConformabilityError("interior matrix shape does not match grid")
        if self.boundary_coupling.shape != (n_int, grid.boundary_indices.size):
            raise ConformabilityError("boundary coupling shape does not match grid")
        self.is_adjoint = bool(is_adjoint)
        diff = self.matrix - self.matrix.T
        scale = max(1.0, float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 1.0)
        self.is_symmetric = bool(
            diff.nnz == 0 or float(np.abs(diff.data).max()) <= 1e-13 * scale
        )
        self._adjoint: DiscreteOperator | None = None

    @property
    def n_dof(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def symmetric_part(self) -> sp.csr_matrix:
        return ((self.matrix + self.matrix.T) * 0.5).tocsr()

    def skew_part(self) -> sp.csr_matrix:
        return ((self.matrix - self.matrix.T) * 0.5).tocsr()


def assemble(grid: Grid, coeffs: EllipticCoefficients) -> DiscreteOperator:
    """Assemble the operator with central second-order differences.

    The divergence term uses arithmetic means of the node-sampled diffusion
    coefficient at half nodes, advection uses central differences, and the
    reaction coefficient lands on the diagonal. With identity diffusion and
    no advection/reaction this reduces to the standard 3-point (1D) or
    5-point (2D) Laplacian stencil.
    """
    a = _sample_diffusion(grid, coeffs.a)
    b = _sample_advection(grid, coeffs.b)
    c = _sample(grid, coeffs.c)
    _check_ellipticity(grid, a)
    if np.any(c < 0):
        warnings.warn("reaction coefficient c(x) < 0 at some nodes; relaxation may not contract")

    if grid.dim == 1:
        rows, cols, vals = _assemble_1d(grid, a, b, c)
    else:
        rows, cols, vals = _assemble_2d(grid, a, b, c)

    full = sp.coo_matrix(
        (vals, (rows, cols)), shape=(grid.n_interior_nodes, grid.n_nodes)
    ).tocsc()
    matrix = full[:, grid.interior_indices].tocsr()
    coupling = full[:, grid.boundary_indices].tocsr()
    return DiscreteOperator(grid, matrix, coupling)


def _assemble_1d(grid: Grid, a, b, c):
    (h,) = grid.spacing
    n = grid.n_interior[0]
    i = np.arange(1, n + 1)
    a_diag = a[:, 0, 0]
    am = 0.5 * (a_diag[i] + a_diag[i - 1])
    ap = 0.5 * (a_diag[i] + a_diag[i + 1])
    b1 = b[i, 0]
    r = i - 1
    rows = np.concatenate([r, r, r])
    cols = np.concatenate([i, i - 1, i + 1])
    vals = np.concatenate(
        [
            (am + ap) / h**2 + c[i],
            -am / h**2 - b1 / (2 * h),
            -ap / h**2 + b1 / (2 * h),
        ]
    )
    return rows, cols, vals


def _assemble_2d(grid: Grid, a, b, c):
    hx, hy = grid.spacing
    nx, ny = grid.n_interior
    sx = nx + 2

    ii, jj = np.meshgrid(np.arange(1, nx + 1), np.arange(1, ny + 1), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()

    def flat(i, j):
        return i + sx * j

    ctr = flat(ii, jj)
    east, west = flat(ii + 1, jj), flat(ii - 1, jj)
    north, south = flat(ii, jj + 1), flat(ii, jj - 1)

    a11, a22, a12 = a[:, 0, 0], a[:, 1, 1], a[:, 0, 1]
    axm = 0.5 * (a11[ctr] + a11[west])
    axp = 0.5 * (a11[ctr] + a11[east])
    aym = 0.5 * (a22[ctr] + a22[south])
    ayp = 0.5 * (a22[ctr] + a22[north])
    b1, b2 = b[ctr, 0], b[ctr, 1]

    r = (ii - 1) + nx * (jj - 1)
    rows = [r, r, r, r, r]
    cols = [ctr, east, west, north, south]
    vals = [
        (axm + axp) / hx**2 + (aym + ayp) / hy**2 + c[ctr],
        -axp / hx**2 + b1 / (2 * hx),
        -axm / hx**2 - b1 / (2 * hx),
        -ayp / hy**2 + b2 / (2 * hy),
        -aym / hy**2 - b2 / (2 * hy),
    ]

    if np.any(a12 != 0.0):
        ne, nw = flat(ii + 1, jj + 1), flat(ii - 1, jj + 1)
        se, sw = flat(ii + 1, jj - 1), flat(ii - 1, jj - 1)
        q = 4 * hx * hy
        rows += [r, r, r, r]
        cols += [ne, sw, nw, se]
        vals += [
            -(a12[east] + a12[north]) / q,
            -(a12[west] + a12[south]) / q,
            (a12[west] + a12[north]) / q,
            (a12[east] + a12[south]) / q,
        ]

    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def apply(op: DiscreteOperator, f: Field) -> Field:
    """Apply the operator to a field; boundary values of ``f`` act as data.

    The result is zero on boundary nodes. For a homogeneous-Dirichlet field
    the coupling block contributes nothing.
    """
    if f.grid != op.grid:
        raise ConformabilityError("field grid does not match operator grid")
    g = op.grid
    out = op.matrix @ f.values[g.interior_indices]
    out += op.boundary_coupling @ f.values[g.boundary_indices]
    return Field.from_interior(g, out)


def adjoint(op: DiscreteOperator) -> DiscreteOperator:
    """Exact transpose of the interior block; involutive and cached."""
    if op._adjoint is None:
        adj = DiscreteOperator(
            op.grid,
            op.matrix.T.tocsr(),
            op.boundary_coupling,
            is_adjoint=not op.is_adjoint,
        )
        adj._adjoint = op
        op._adjoint = adj
    return op._adjoint


@dataclass(frozen=True)
class CoercivityEstimate:
    """Lower spectral bound of the operator's symmetric part."""

    lambda_min: float
    method: str  # "power-iteration-on-inverse" or "analytic"
    iterations: int

    def __post_init__(self):
        if self.lambda_min <= 0:
            raise DissipativityError(self.lambda_min)

    @classmethod
    def analytic(cls, value: float) -> "CoercivityEstimate":
        return cls(float(value), "analytic", 0)


def sym_power_iteration(S, tol: float = 1e-12, max_iter: int = 100000, seed: int = 0):
    """Dominant eigenvalue (by magnitude, signed Rayleigh value) of symmetric S.

    Deterministic: the start vector comes from a seeded generator. Returns
    ``(eigenvalue, iterations)``.
    """
    n = S.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    for k in range(1, max_iter + 1):
        w = S @ v
        nrm = np.linalg.norm(w)
        if not np.isfinite(nrm) or nrm < 1e-300:
            raise EstimationError("power iteration collapsed")
        v = w / nrm
        lam = float(v @ (S @ v))
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return lam, k
        lam_prev = lam
    return lam_prev, max_iter


class _InverseIterationFailure(Exception):
    pass


def estimate_coercivity(
    op: DiscreteOperator,
    tol: float = 1e-11,
    max_iter: int = 200,
    solver_tol: float = 1e-12,
    seed: int = 0,
) -> CoercivityEstimate:
    """Estimate the smallest eigenvalue of the symmetric part.

    Runs inverse power iteration, solving with CG at each sweep and reading
    off the Rayleigh quotient. When CG cannot make progress the symmetric
    part is suspect: a spectral-fold power iteration then diagnoses whether
    the lower spectrum actually reaches zero or below, which is reported as
    a dissipativity violation.
    """
    S = op.symmetric_part()
    n = S.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    try:
        for k in range(1, max_iter + 1):
            w, info = _cg(S, v, rtol=solver_tol, atol=0.0, maxiter=20 * n)
            if info != 0 or not np.all(np.isfinite(w)):
                raise _InverseIterationFailure
            nrm = np.linalg.norm(w)
            if nrm < 1e-300:
                raise _InverseIterationFailure
            v = w / nrm
            lam = float(v @ (S @ v))
            if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
                if lam <= 0:
                    raise DissipativityError(lam)
                return CoercivityEstimate(lam, "power-iteration-on-inverse", k)
            lam_prev = lam
        if not np.isfinite(lam_prev) or lam_prev <= 0:
            raise _InverseIterationFailure
        return CoercivityEstimate(lam_prev, "power-iteration-on-inverse", max_iter)
    except _InverseIterationFailure:
        rho, _ = sym_power_iteration(S, seed=seed)
        rho = abs(rho)
        folded = (sp.identity(n, format="csr") * rho) - S
        mu, _ = sym_power_iteration(folded, seed=seed)
        lam_min = rho - mu
        if lam_min <= max(1e-10 * rho, 0.0):
            raise DissipativityError(lam_min) from None
        raise EstimationError(
            f"inverse iteration failed though spectrum looks positive (lambda~{lam_min:.3e})"
        ) from None


def dump_matrix_market(op: DiscreteOperator, path: str | Path) -> Path:
    """Dump the interior sparse matrix in MatrixMarket coordinate format."""
    from .ioutil import atomic_write_text

    coo = op.matrix.tocoo()
    lines = ["%%MatrixMarket matrix coordinate real general"]
    lines.append(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}")
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        lines.append(f"{coo.row[k] + 1} {coo.col[k] + 1} {'%.17g' % coo.data[k]}")
    return atomic_write_text(path, "\n".join(lines) + "\n")
