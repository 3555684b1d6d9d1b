"""Reference quadratic inverse problem on the unit interval.

Forward operator -u'' with homogeneous Dirichlet data, source built on the
first d sine modes, target manufactured from a known parameter vector. The
sampled sine modes are exact eigenvectors of the discrete interior
Laplacian and the trapezoid pairing makes them exactly orthonormal (up to
the factor 1/2), so objective, gradient, Hessian, and minimizer all have
closed forms in the *discrete* eigenvalues

    lambda_k = (2/h^2) (1 - cos(k pi h)).

Those closed forms are what every oracle in the test suite checks against;
the continuum analogues (k pi)^2 differ at O(h^2) and are exposed side by
side so that the gap itself can be asserted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import DiscreteOperator, EllipticCoefficients, assemble
from .mesh import Field, Grid
from .objective import TargetProfile, ThetaVector
from .online import OnlineRunConfig, Schedule
from .source import LinearBasisSource, sine_basis

__all__ = ["StockProblem", "build_stock"]


@dataclass(frozen=True)
class StockProblem:
    """Assembled stock problem plus its closed-form quantities."""

    grid: Grid
    op: DiscreteOperator
    model: LinearBasisSource
    target: TargetProfile
    theta_true: np.ndarray
    gamma: float

    @property
    def d(self) -> int:
        return self.theta_true.size

    @property
    def lambda_discrete(self) -> np.ndarray:
        """Eigenvalues of the discrete operator on the first d sine modes."""
        (h,) = self.grid.spacing
        k = np.arange(1, self.d + 1)
        return (2.0 / h**2) * (1.0 - np.cos(k * np.pi * h))

    @property
    def lambda_continuum(self) -> np.ndarray:
        k = np.arange(1, self.d + 1)
        return (k * np.pi) ** 2

    @property
    def coercivity(self) -> float:
        """Smallest eigenvalue of the operator (k = 1 discrete mode)."""
        (h,) = self.grid.spacing
        return (2.0 / h**2) * (1.0 - np.cos(np.pi * h))

    @property
    def theta_star(self) -> np.ndarray:
        """Minimizer of the discrete objective (exact)."""
        lam2 = self.lambda_discrete**2
        return self.theta_true / (1.0 + 2.0 * self.gamma * lam2)

    @property
    def theta_star_continuum(self) -> np.ndarray:
        """Continuum-eigenvalue version of the minimizer formula."""
        lam2 = self.lambda_continuum**2
        return self.theta_true / (1.0 + 2.0 * self.gamma * lam2)

    @property
    def hessian_diag(self) -> np.ndarray:
        """Objective Hessian is diagonal in the mode basis: 1/(2 lam^2) + gamma."""
        return 1.0 / (2.0 * self.lambda_discrete**2) + self.gamma

    @property
    def q(self) -> float:
        """Strong convexity constant: smallest Hessian eigenvalue."""
        return float(self.hessian_diag.min())

    @property
    def big_l(self) -> float:
        """Smoothness constant: largest Hessian eigenvalue."""
        return float(self.hessian_diag.max())

    @property
    def c_alpha(self) -> float:
        """Default rate constant 2/q, giving c_alpha * q = 2 > 1."""
        return 2.0 / self.q

    def closed_form_objective(self, theta) -> float:
        dth = np.asarray(theta, dtype=np.float64) - self.theta_true
        lam2 = self.lambda_discrete**2
        th = np.asarray(theta, dtype=np.float64)
        return float(0.25 * np.sum(dth**2 / lam2) + 0.5 * self.gamma * th @ th)

    def closed_form_gradient(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=np.float64)
        dth = th - self.theta_true
        lam2 = self.lambda_discrete**2
        return 0.5 * dth / lam2 + self.gamma * th

    def theta_vector(self, values=None) -> ThetaVector:
        v = np.zeros(self.d) if values is None else values
        return ThetaVector(v, self.gamma)

    def schedule(self, c_alpha: float | None = None) -> Schedule:
        return Schedule("inverse-linear", c_alpha if c_alpha is not None else self.c_alpha)

    def online_config(
        self,
        horizon: float,
        theta0=None,
        c_alpha: float | None = None,
        log_stride: int | None = None,
    ) -> OnlineRunConfig:
        return OnlineRunConfig(
            op=self.op,
            model=self.model,
            target=self.target,
            theta0=self.theta_vector(theta0),
            schedule=self.schedule(c_alpha),
            horizon=horizon,
            log_stride=log_stride,
            theta_star=self.theta_star,
        )


def build_stock(
    n_interior: int = 31,
    d: int = 3,
    theta_true=(1.0, -0.6, 0.3),
    gamma: float = 0.01,
) -> StockProblem:
    """Build the stock problem; the target is manufactured spectrally.

    The target field is sum_k theta_true_k / lambda_k * sin(k pi x) with the
    *discrete* lambda_k, so the steady solution at theta_true reproduces it
    to solver tolerance and the closed forms above are exact, not O(h^2)
    approximations. Boundary samples are forced to exact zeros.
    """
    theta_true = np.asarray(theta_true, dtype=np.float64).ravel()
    if theta_true.size != d:
        raise ValueError(f"theta_true must have d = {d} entries")
    grid = Grid.interval(n_interior)
    op = assemble(grid, EllipticCoefficients.poisson())
    model = LinearBasisSource(sine_basis(d))

    (h,) = grid.spacing
    k = np.arange(1, d + 1)
    lam = (2.0 / h**2) * (1.0 - np.cos(k * np.pi * h))
    hvals = model.basis_matrix(grid) @ (theta_true / lam)
    hvals = hvals.copy()
    hvals[grid.boundary_indices] = 0.0
    target = TargetProfile(Field(grid, hvals))

    return StockProblem(
        grid=grid,
        op=op,
        model=model,
        target=target,
        theta_true=theta_true,
        gamma=float(gamma),
    )
