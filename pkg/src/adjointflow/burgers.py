"""Steady 2D Burgers-type inverse problem and its online identification run.

The state equation is

    0 = -theta_1 u u_x - theta_2 u u_y + u_xx + u_yy      on (0,1)^2

with u = 1 on the x = 0 and y = 0 edges and u = -1 on the x = 1 and y = 1
edges (corner nodes take the average of their two edges). The continuous
adjoint is discretized as displayed,

    0 = theta_1 u v_x + theta_2 u v_y + v_xx + v_yy + (u - h),  v|_boundary = 0,

and the parameter gradient is dJ/dtheta_1 = -integral(v u u_x),
dJ/dtheta_2 = -integral(v u u_y). This adjoint is not the transpose of the
linearized residual, so gradients are accurate to discretization order
only; checks against finite differences are directional (cosine
similarity), not entrywise.

Steady solves use explicit pseudo-time marching under a diffusion CFL bound
with an advection correction. The online run couples the u march, the v
march, and the theta update, all reading the pre-step state, with gamma = 0
(this demonstration sits outside the gamma > 0 theory, so no schedule
compliance gate applies here).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .diagnostics import TraceRecord
from .errors import (
    BoundaryDataError,
    ConformabilityError,
    DivergenceError,
    EstimationError,
    NonConvergenceError,
)
from .mesh import Field, Grid, norm_l2, read_field_csv, write_field_csv
from .online import Schedule

__all__ = [
    "BurgersProblem",
    "BurgersRunConfig",
    "boundary_field",
    "burgers_residual",
    "adjoint_residual",
    "cfl_step",
    "solve_burgers_steady",
    "solve_burgers_adjoint",
    "burgers_gradient",
    "target_field",
    "pick_c_alpha",
    "run_burgers_online",
]


@dataclass(frozen=True)
class BurgersProblem:
    """Domain, advection parameters, and the fixed edge data."""

    grid: Grid
    theta: tuple = (10.0, 10.0)

    def __post_init__(self):
        if self.grid.dim != 2:
            raise ConformabilityError("the Burgers problem is two-dimensional")
        if self.grid.lo != (0.0, 0.0) or self.grid.hi != (1.0, 1.0):
            raise ValueError("the Burgers problem lives on the unit square")
        th = tuple(float(v) for v in self.theta)
        if len(th) != 2 or not all(np.isfinite(th)):
            raise ValueError("theta must be two finite reals")
        object.__setattr__(self, "theta", th)

    @classmethod
    def default(cls, n_interior: int = 64, theta=(10.0, 10.0)) -> "BurgersProblem":
        return cls(Grid.box(n_interior, n_interior), tuple(theta))

    def at_theta(self, theta) -> "BurgersProblem":
        return BurgersProblem(self.grid, tuple(theta))


def _boundary_values(grid: Grid) -> np.ndarray:
    """Full-node array: edge data on the boundary, zero inside.

    Each boundary node averages the values of the edges it belongs to, so
    corners become (1+1)/2 = 1 at (0,0), (-1-1)/2 = -1 at (1,1), and 0 at
    the two mixed corners.
    """
    acc = np.zeros((grid.shape[1], grid.shape[0]))
    cnt = np.zeros_like(acc)
    acc[:, 0] += 1.0
    cnt[:, 0] += 1.0  # x = 0 edge
    acc[0, :] += 1.0
    cnt[0, :] += 1.0  # y = 0 edge
    acc[:, -1] += -1.0
    cnt[:, -1] += 1.0  # x = 1 edge
    acc[-1, :] += -1.0
    cnt[-1, :] += 1.0  # y = 1 edge
    vals = np.zeros_like(acc)
    np.divide(acc, cnt, out=vals, where=cnt > 0)
    return vals.ravel()


def boundary_field(p: BurgersProblem) -> Field:
    """The problem's Dirichlet data as a field (zero interior)."""
    return Field(p.grid, _boundary_values(p.grid))


def _check_boundary(p: BurgersProblem, u: Field, what: str) -> None:
    if u.grid != p.grid:
        raise ConformabilityError(f"{what} grid does not match the problem grid")
    want = _boundary_values(p.grid)[p.grid.boundary_indices]
    got = u.values[p.grid.boundary_indices]
    if not np.allclose(got, want, rtol=0, atol=1e-12):
        raise BoundaryDataError(f"{what} does not carry the problem's edge data")


def _interior_residual(U: np.ndarray, th1: float, th2: float, hx: float, hy: float):
    """Central-difference residual on interior nodes of a (ny+2, nx+2) array."""
    ux = (U[1:-1, 2:] - U[1:-1, :-2]) / (2.0 * hx)
    uy = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2.0 * hy)
    lap = (U[1:-1, 2:] - 2.0 * U[1:-1, 1:-1] + U[1:-1, :-2]) / hx**2 + (
        U[2:, 1:-1] - 2.0 * U[1:-1, 1:-1] + U[:-2, 1:-1]
    ) / hy**2
    uc = U[1:-1, 1:-1]
    return -th1 * uc * ux - th2 * uc * uy + lap


def _interior_adjoint_residual(
    V: np.ndarray, U: np.ndarray, H: np.ndarray, th1: float, th2: float, hx: float, hy: float
):
    vx = (V[1:-1, 2:] - V[1:-1, :-2]) / (2.0 * hx)
    vy = (V[2:, 1:-1] - V[:-2, 1:-1]) / (2.0 * hy)
    lap = (V[1:-1, 2:] - 2.0 * V[1:-1, 1:-1] + V[1:-1, :-2]) / hx**2 + (
        V[2:, 1:-1] - 2.0 * V[1:-1, 1:-1] + V[:-2, 1:-1]
    ) / hy**2
    uc = U[1:-1, 1:-1]
    return th1 * uc * vx + th2 * uc * vy + lap + (uc - H[1:-1, 1:-1])


def burgers_residual(p: BurgersProblem, u: Field, enforce_boundary: bool = True) -> Field:
    """Node-wise PDE residual; zero on boundary nodes.

    With ``enforce_boundary`` (the default) the field must carry the
    problem's edge data. Disabling the check turns this into a bare stencil
    evaluation, which is what manufactured-solution convergence studies
    need, since no smooth function matches the discontinuous corner data.
    """
    if enforce_boundary:
        _check_boundary(p, u, "state")
    elif u.grid != p.grid:
        raise ConformabilityError("state grid does not match the problem grid")
    hx, hy = p.grid.spacing
    res = _interior_residual(u.as_2d(), p.theta[0], p.theta[1], hx, hy)
    return Field.from_interior(p.grid, res.ravel())


def adjoint_residual(p: BurgersProblem, v: Field, u: Field, h: Field) -> Field:
    """Residual of the displayed adjoint equation; zero on boundary nodes."""
    for f, name in ((v, "adjoint state"), (u, "state"), (h, "target")):
        if f.grid != p.grid:
            raise ConformabilityError(f"{name} grid does not match the problem grid")
    hx, hy = p.grid.spacing
    res = _interior_adjoint_residual(
        v.as_2d(), u.as_2d(), h.as_2d(), p.theta[0], p.theta[1], hx, hy
    )
    return Field.from_interior(p.grid, res.ravel())


def cfl_step(p: BurgersProblem, u_scale: float = 2.0, safety: float = 0.9) -> float:
    """Stable pseudo-time step: diffusion spectral bound plus advection radius.

    rho bounds the diffusion stencil spectrum by 4/hx^2 + 4/hy^2; the
    advection contribution is bounded through its Gershgorin row radius with
    |u| <= u_scale. The combined bound 2 rho / (rho^2 + omega^2) reduces to
    the usual 2/rho when theta = 0.
    """
    hx, hy = p.grid.spacing
    rho = 4.0 / hx**2 + 4.0 / hy**2
    omega = abs(p.theta[0]) * u_scale / hx + abs(p.theta[1]) * u_scale / hy
    return safety * 2.0 * rho / (rho * rho + omega * omega)


def _march_forward(p, U, dt, tol, max_steps, chunk=2000):
    """March U (modified in place conceptually; returns the final array)."""
    hx, hy = p.grid.spacing
    th1, th2 = p.theta
    w = hx * hy
    Un = U.copy()
    steps = 0
    while True:
        res = _interior_residual(U, th1, th2, hx, hy)
        rnorm = float(np.sqrt(w * np.sum(res * res)))
        if rnorm <= tol:
            return U, steps
        if steps >= max_steps:
            raise NonConvergenceError(rnorm, steps)
        n = min(chunk, max_steps - steps)
        ret = _kernels.burgers_forward_chunk(U, Un, th1, th2, hx, hy, dt, n)
        if ret:
            raise DivergenceError(steps + ret)
        steps += n


def _march_adjoint(p, V, U, H, dt, tol, max_steps, chunk=2000):
    hx, hy = p.grid.spacing
    th1, th2 = p.theta
    w = hx * hy
    Vn = V.copy()
    steps = 0
    while True:
        res = _interior_adjoint_residual(V, U, H, th1, th2, hx, hy)
        rnorm = float(np.sqrt(w * np.sum(res * res)))
        if rnorm <= tol:
            return V, steps
        if steps >= max_steps:
            raise NonConvergenceError(rnorm, steps)
        n = min(chunk, max_steps - steps)
        ret = _kernels.burgers_adjoint_chunk(V, Vn, U, H, th1, th2, hx, hy, dt, n)
        if ret:
            raise DivergenceError(steps + ret)
        steps += n


def solve_burgers_steady(
    p: BurgersProblem,
    tol: float = 1e-8,
    u0: Field | None = None,
    max_steps: int = 2_000_000,
    dt: float | None = None,
) -> Field:
    """Relax the state equation to ``||residual||_L2 <= tol``; deterministic."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if u0 is None:
        u0 = boundary_field(p)
    else:
        _check_boundary(p, u0, "initial state")
    if dt is None:
        dt = cfl_step(p, u_scale=2.0 * max(1.0, float(np.abs(u0.values).max())))
    U = u0.as_2d().copy()
    U, _ = _march_forward(p, U, dt, tol, max_steps)
    return Field(p.grid, U.ravel())


def solve_burgers_adjoint(
    p: BurgersProblem,
    u: Field,
    h: Field,
    tol: float = 1e-8,
    v0: Field | None = None,
    max_steps: int = 2_000_000,
    dt: float | None = None,
) -> Field:
    """Relax the displayed adjoint equation; homogeneous Dirichlet data."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    for f, name in ((u, "state"), (h, "target")):
        if f.grid != p.grid:
            raise ConformabilityError(f"{name} grid does not match the problem grid")
    if v0 is None:
        v0 = Field.zeros(p.grid)
    elif not v0.is_homogeneous_dirichlet(tol=1e-12):
        raise BoundaryDataError("adjoint initial state must vanish on the boundary")
    if dt is None:
        dt = cfl_step(p, u_scale=2.0 * max(1.0, float(np.abs(u.values).max())))
    V = v0.as_2d().copy()
    U = np.ascontiguousarray(u.as_2d())
    H = np.ascontiguousarray(h.as_2d())
    V, _ = _march_adjoint(p, V, U, H, dt, tol, max_steps)
    return Field(p.grid, V.ravel())


def burgers_gradient(p: BurgersProblem, u: Field, u_hat: Field) -> tuple:
    """Objective gradient (dJ/dtheta_1, dJ/dtheta_2) by trapezoid quadrature.

    The integrands -u_hat u u_x and -u_hat u u_y use central differences on
    interior nodes; boundary nodes contribute nothing because u_hat
    vanishes there.
    """
    for f, name in ((u, "state"), (u_hat, "adjoint state")):
        if f.grid != p.grid:
            raise ConformabilityError(f"{name} grid does not match the problem grid")
    hx, hy = p.grid.spacing
    U = u.as_2d()
    V = u_hat.as_2d()
    ux = (U[1:-1, 2:] - U[1:-1, :-2]) / (2.0 * hx)
    uy = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2.0 * hy)
    core = V[1:-1, 1:-1] * U[1:-1, 1:-1]
    w = hx * hy
    g1 = -w * float(np.sum(core * ux))
    g2 = -w * float(np.sum(core * uy))
    return (g1, g2)


def target_field(
    p: BurgersProblem, tol: float = 1e-8, cache_dir: str | Path | None = None
) -> Field:
    """Steady solution at the problem's theta, optionally cached as CSV.

    The cache key is the interior grid size and the generating parameters;
    a cached file is trusted only if it round-trips onto the same grid.
    """
    if cache_dir is not None:
        nx, ny = p.grid.n_interior
        name = f"burgers-target-{nx}x{ny}-{p.theta[0]:g}-{p.theta[1]:g}.csv"
        path = Path(cache_dir) / name
        if path.exists():
            h = read_field_csv(path)
            if h.grid == p.grid:
                return h
        h = solve_burgers_steady(p, tol=tol)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_field_csv(h, path)
        return h
    return solve_burgers_steady(p, tol=tol)


def pick_c_alpha(
    p: BurgersProblem,
    h: Field,
    dt: float,
    theta0,
    probe_horizon: float = 2.0,
    start: float = 16384.0,
    theta_cap: float = 100.0,
) -> float:
    """Largest power-of-two rate constant that survives a short probe run.

    Survival means the coupled probe stays finite and |theta| stays under
    ``theta_cap``. The start value is sized so that, together with the flat
    curvature of this objective (about 2e-4 along the symmetric direction),
    the product of curvature and rate constant comfortably exceeds 1; lower
    powers of two are only reached when the probe detects instability.
    Deterministic by construction.
    """
    steps = max(1, int(np.ceil(probe_horizon / dt)))
    H = np.ascontiguousarray(h.as_2d())
    bvals = _boundary_values(p.grid).reshape(H.shape)
    c = float(start)
    while c >= 1.0:
        U = bvals.copy()
        V = np.zeros_like(U)
        theta = np.asarray(theta0, dtype=np.float64).copy()
        ret = _kernels.burgers_online_chunk(
            U,
            U.copy(),
            V,
            V.copy(),
            theta,
            H,
            0,
            steps,
            dt,
            p.grid.spacing[0],
            p.grid.spacing[1],
            0.0,
            _kernels.SCHED_INVERSE_LINEAR,
            c,
            1.0,
        )
        if ret == 0 and np.all(np.isfinite(U)) and np.abs(theta).max() <= theta_cap:
            return c
        c /= 2.0
    raise EstimationError("no power-of-two rate constant survived the probe run")


@dataclass
class BurgersRunConfig:
    """Settings for the coupled identification run.

    ``problem.theta`` holds the generating parameters (the target of the
    recovery); the run itself starts from ``theta0``. ``c_alpha`` of None
    triggers the probe-based bracketing choice. gamma is 0 throughout.
    """

    problem: BurgersProblem
    horizon: float
    theta0: tuple = (0.0, 0.0)
    schedule: Schedule | None = None
    c_alpha: float | None = None
    log_stride: int | None = None
    target_tol: float = 1e-8
    diag_tol: float = 1e-6
    diag_max_steps: int = 2_000_000
    cache_dir: str | Path | None = None
    target: Field | None = None


def run_burgers_online(cfg: BurgersRunConfig) -> TraceRecord:
    """Couple the state march, adjoint march, and parameter update.

    Per logged row the trace carries warm-started steady diagnostics: the
    objective at theta(t), the steady-adjoint gradient norm, the state and
    adjoint lags phi and psi, theta_err against the generating parameters,
    alpha(t), the boundedness proxy, and 2 operator applications per step
    as the cost column. Aborts with the partial trace on divergence.
    """
    p = cfg.problem
    g = p.grid
    hx, hy = g.spacing
    if cfg.horizon <= 0:
        raise ValueError("horizon must be positive")

    h = cfg.target if cfg.target is not None else target_field(p, cfg.target_tol, cfg.cache_dir)
    if h.grid != g:
        raise ConformabilityError("target grid does not match the problem grid")
    H = np.ascontiguousarray(h.as_2d())

    dt = cfl_step(p, u_scale=2.0)
    sched = cfg.schedule
    if sched is None:
        c = cfg.c_alpha
        if c is None:
            c = pick_c_alpha(p, h, dt, cfg.theta0)
        sched = Schedule("inverse-linear", c)
    if sched.kernel_code is None:
        raise ValueError("the Burgers runner needs a schedule from the built-in families")

    n_steps = int(np.ceil(cfg.horizon / dt - 1e-12))
    stride = cfg.log_stride if cfg.log_stride is not None else max(1, n_steps // 150)
    marks = list(range(0, n_steps + 1, stride))
    if marks[-1] != n_steps:
        marks.append(n_steps)

    U = _boundary_values(g).reshape(H.shape)
    Un = U.copy()
    V = np.zeros_like(U)
    Vn = V.copy()
    theta = np.asarray(cfg.theta0, dtype=np.float64).copy()
    if theta.shape != (2,):
        raise ValueError("theta0 must have two entries")
    theta_star = np.asarray(p.theta, dtype=np.float64)

    rows = {k: [] for k in ("t", "j", "gn", "err", "phi", "psi", "al", "sup", "cum")}
    thetas = []
    warm_u = None
    warm_v = None

    def log(step_idx: int):
        nonlocal warm_u, warm_v
        t = step_idx * dt
        p_t = p.at_theta(theta)
        U0 = warm_u.copy() if warm_u is not None else _boundary_values(g).reshape(H.shape)
        ustar, _ = _march_forward(p_t, U0, dt, cfg.diag_tol, cfg.diag_max_steps)
        V0 = warm_v.copy() if warm_v is not None else np.zeros_like(U)
        vstar, _ = _march_adjoint(p_t, V0, ustar, H, dt, cfg.diag_tol, cfg.diag_max_steps)
        warm_u, warm_v = ustar, vstar

        uf = Field(g, U.ravel())
        vf = Field(g, V.ravel())
        usf = Field(g, ustar.ravel())
        vsf = Field(g, vstar.ravel())
        resid = usf - h
        gvec = np.asarray(burgers_gradient(p_t, usf, vsf))
        rows["t"].append(t)
        rows["j"].append(0.5 * float(np.sum(g.quad_weights * resid.values**2)))
        rows["gn"].append(float(np.linalg.norm(gvec)))
        rows["err"].append(float(np.linalg.norm(theta - theta_star)))
        rows["phi"].append(norm_l2(uf - usf))
        rows["psi"].append(norm_l2(vf - vsf))
        rows["al"].append(sched.alpha(t))
        rows["sup"].append(norm_l2(uf) + norm_l2(vf) + float(np.linalg.norm(theta)))
        rows["cum"].append(2.0 * step_idx)
        thetas.append(theta.copy())

    def record(diverged=False, step=None):
        return TraceRecord(
            t=rows["t"],
            j=rows["j"],
            grad_norm=rows["gn"],
            theta=np.vstack(thetas),
            theta_err=rows["err"],
            phi_norm=rows["phi"],
            psi_norm=rows["psi"],
            alpha=rows["al"],
            sup_norm=rows["sup"],
            cum_inner_iters=rows["cum"],
            diverged=diverged,
            divergence_step=step,
        )

    log(0)
    pos = 0
    for mark in marks[1:]:
        ret = _kernels.burgers_online_chunk(
            U,
            Un,
            V,
            Vn,
            theta,
            H,
            pos,
            mark - pos,
            dt,
            hx,
            hy,
            0.0,
            sched.kernel_code,
            sched.c_alpha,
            sched.exponent,
        )
        if ret:
            bad = pos + ret
            raise DivergenceError(bad, record(diverged=True, step=bad))
        pos = mark
        log(pos)
    return record()
