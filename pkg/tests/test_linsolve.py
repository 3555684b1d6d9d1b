"""Steady-solve contract tests against dense direct oracles."""

import numpy as np
import pytest

from adjointflow.elliptic import EllipticCoefficients, assemble
from adjointflow.errors import ConformabilityError, NonConvergenceError
from adjointflow.linsolve import SolveInfo, SolverConfig, solve_steady, solve_steady_info
from adjointflow.mesh import Field, Grid, sample_function


def poisson(n=31):
    g = Grid.interval(n)
    return g, assemble(g, EllipticCoefficients.poisson())


def test_zero_rhs_returns_zero_without_iterating():
    g, op = poisson()
    u, info = solve_steady_info(op, Field.zeros(g))
    assert np.array_equal(u.values, np.zeros(g.n_nodes))
    assert info.iterations == 0
    assert info.residual == 0.0


def test_discrete_sine_mode_solve_is_exact():
    # rhs = lambda_h * sin(pi x) makes the discrete solution exactly sin(pi x)
    g, op = poisson()
    h = g.spacing[0]
    lam = 2.0 / h**2 * (1.0 - np.cos(np.pi * h))
    rhs = sample_function(g, lambda x: lam * np.sin(np.pi * x))
    u = solve_steady(op, rhs, SolverConfig(tol=1e-12))
    want = np.sin(np.pi * g.coords[:, 0])
    assert np.max(np.abs(u.values - want)) <= 1e-10


def test_dense_direct_oracle():
    rng = np.random.default_rng(3)
    g, op = poisson(25)
    rhs = Field.from_interior(g, rng.standard_normal(25))
    u = solve_steady(op, rhs, SolverConfig(tol=1e-12))
    direct = np.linalg.solve(op.to_dense(), rhs.values[g.interior_indices])
    assert np.max(np.abs(u.values[g.interior_mask] - direct)) <= 1e-8


def test_reported_residual_meets_contract():
    rng = np.random.default_rng(4)
    g, op = poisson()
    rhs = Field.from_interior(g, rng.standard_normal(31))
    for tol in (1e-6, 1e-10):
        u, info = solve_steady_info(op, rhs, SolverConfig(tol=tol))
        b = rhs.values[g.interior_indices]
        res = np.linalg.norm(op.matrix @ u.values[g.interior_mask] - b) / np.linalg.norm(b)
        assert res <= tol
        assert info.residual == pytest.approx(res, rel=1e-12)
        assert info.iterations > 0


def test_nonhomogeneous_boundary_affine_exact():
    # -u'' = 0 with u(0)=1, u(1)=3 has the affine solution 1 + 2x
    g, op = poisson()
    bvals = np.zeros(g.n_nodes)
    bvals[0], bvals[-1] = 1.0, 3.0
    bdry = Field(g, bvals)
    u = solve_steady(op, Field.zeros(g), SolverConfig(tol=1e-12), boundary=bdry)
    want = 1.0 + 2.0 * g.coords[:, 0]
    assert np.max(np.abs(u.values - want)) <= 1e-9
    assert u.values[0] == 1.0 and u.values[-1] == 3.0


def test_auto_picks_bicgstab_for_advection():
    g = Grid.interval(31)
    op = assemble(g, EllipticCoefficients(b=2.0))
    rhs = sample_function(g, lambda x: np.sin(np.pi * x))
    u, info = solve_steady_info(op, rhs)
    assert info.method == "bicgstab"
    direct = np.linalg.solve(op.to_dense(), rhs.values[g.interior_indices])
    assert np.max(np.abs(u.values[g.interior_mask] - direct)) <= 1e-7


def test_cg_refused_on_nonsymmetric_operator():
    g = Grid.interval(15)
    op = assemble(g, EllipticCoefficients(b=1.0))
    rhs = sample_function(g, lambda x: x)
    with pytest.raises(ValueError):
        solve_steady(op, rhs, SolverConfig(method="cg"))


def test_jacobi_preconditioning_still_meets_tol():
    g = Grid.interval(63)
    op = assemble(g, EllipticCoefficients(a=lambda x: 1.0 + 10.0 * x * x))
    rhs = sample_function(g, lambda x: np.sin(2.0 * np.pi * x))
    u, info = solve_steady_info(op, rhs, SolverConfig(tol=1e-10, precondition="jacobi"))
    b = rhs.values[g.interior_indices]
    res = np.linalg.norm(op.matrix @ u.values[g.interior_mask] - b) / np.linalg.norm(b)
    assert res <= 1e-10


def test_nonconvergence_carries_diagnostics():
    rng = np.random.default_rng(11)
    g, op = poisson(63)
    rhs = Field.from_interior(g, rng.standard_normal(63))
    with pytest.raises(NonConvergenceError) as exc:
        solve_steady(op, rhs, SolverConfig(tol=1e-12, max_iter=2))
    assert exc.value.iterations <= 2
    assert exc.value.residual > 1e-12


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(method="gauss")
    with pytest.raises(ValueError):
        SolverConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(precondition="ilu")


def test_grid_mismatch_rejected():
    _, op = poisson()
    rhs = sample_function(Grid.interval(15), lambda x: x)
    with pytest.raises(ConformabilityError):
        solve_steady(op, rhs)


def test_solve_info_is_frozen():
    info = SolveInfo("conjugate-gradient", 3, 1e-12)
    with pytest.raises(AttributeError):
        info.iterations = 4
