"""Offline adjoint-descent tests.

On the stock problem the objective is quadratic with a diagonal Hessian in
the mode basis, so constant-step descent has a closed-form trajectory:

    theta_k(i) - theta*_k = (1 - alpha * H_kk)^i (theta_k(0) - theta*_k)

which the trace must reproduce coordinate by coordinate.
"""

import numpy as np
import pytest

from adjointflow.baseline import OfflineRunConfig, default_step_size, run_offline
from adjointflow.errors import DivergenceError, ScheduleComplianceError
from adjointflow.online import Schedule, run_online
from adjointflow.stock import build_stock


def offline_cfg(s, **kw):
    kw.setdefault("theta0", s.theta_vector())
    kw.setdefault("theta_star", s.theta_star)
    return OfflineRunConfig(op=s.op, model=s.model, target=s.target, **kw)


def test_default_step_is_inverse_smoothness():
    s = build_stock()
    step = default_step_size(s.op, s.model, s.theta_vector(), s.target)
    assert step == pytest.approx(1.0 / s.big_l, rel=1e-7)


def test_trajectory_matches_closed_form_geometric_decay():
    s = build_stock()
    alpha = 1.0 / s.big_l
    trace = run_offline(offline_cfg(s, max_iters=60, schedule=Schedule("constant", alpha)))
    iters = np.arange(61)
    factors = 1.0 - alpha * s.hessian_diag  # per-mode contraction
    want = s.theta_star[None, :] * (1.0 - factors[None, :] ** iters[:, None])
    assert trace.theta.shape == (61, 3)
    assert np.max(np.abs(trace.theta - want)) <= 1e-8
    # mode 1 owns the largest Hessian entry 1/(2 lambda_1^2) + gamma = L, so
    # it converges in a single step at alpha = 1/L; the highest mode owns q
    # and is the slow one, contracting by exactly 1 - q/L per iteration
    assert abs(trace.theta[1, 0] - s.theta_star[0]) <= 1e-9
    gap = trace.theta[1:6, 2] - s.theta_star[2]
    assert np.max(np.abs(gap[1:] / gap[:-1] - factors.max())) <= 1e-3
    assert trace.theta_err[-1] <= 1e-8


def test_objective_decreases_to_minimum():
    s = build_stock()
    trace = run_offline(offline_cfg(s, max_iters=80))
    # strict decrease until the value parks at J(theta*) up to roundoff
    assert np.all(np.diff(trace.j[:8]) < 0)
    assert np.all(np.diff(trace.j) < 1e-15)
    assert trace.j[-1] == pytest.approx(s.closed_form_objective(s.theta_star), rel=1e-12)
    assert np.all(trace.phi_norm == 0.0) and np.all(trace.psi_norm == 0.0)
    assert np.all(np.isfinite(trace.sup_norm))


def test_start_at_minimizer_stays_there():
    s = build_stock()
    trace = run_offline(offline_cfg(s, theta0=s.theta_vector(s.theta_star), max_iters=5))
    assert np.max(trace.grad_norm) <= 1e-9
    assert np.max(np.abs(trace.theta - s.theta_star)) <= 1e-9


def test_cost_column_counts_krylov_iterations():
    s = build_stock()
    trace = run_offline(offline_cfg(s, max_iters=20))
    assert trace.cum_inner_iters[0] > 0  # iteration 0 already pays two solves
    assert np.all(np.diff(trace.cum_inner_iters) > 0)


def test_grad_tol_stops_early():
    s = build_stock()
    trace = run_offline(offline_cfg(s, max_iters=5000, grad_tol=1e-8))
    assert trace.grad_norm[-1] <= 1e-8
    assert np.all(trace.grad_norm[:-1] > 1e-8)
    assert trace.n_rows < 5001


def test_matches_online_minimizer():
    # two independent routes to theta*: the classical loop run to
    # convergence and the coupled integrator at a moderate horizon
    s = build_stock()
    off = run_offline(offline_cfg(s, max_iters=4000, grad_tol=1e-12))
    on = run_online(s.online_config(horizon=100.0))
    assert np.max(np.abs(off.theta[-1] - s.theta_star)) <= 1e-10
    assert np.max(np.abs(off.theta[-1] - on.theta[-1])) <= 1e-4


def test_noncompliant_schedule_rejected():
    s = build_stock()
    bad = Schedule("custom-power", 1.0, exponent=0.3)
    with pytest.raises(ScheduleComplianceError):
        run_offline(offline_cfg(s, schedule=bad))
    # constant steps are the classical default and bypass the decay gate
    run_offline(offline_cfg(s, max_iters=2, schedule=Schedule("constant", 1.0 / s.big_l)))


def test_divergence_raises_with_partial_trace():
    # start high enough and step hard enough that the very first update
    # overflows while the iteration-0 solves are still healthy; slower
    # blowups die inside the Krylov solver as NonConvergenceError instead
    s = build_stock()
    huge = Schedule("constant", 1e170)
    with pytest.raises(DivergenceError) as exc:
        run_offline(
            offline_cfg(
                s,
                theta0=s.theta_vector([1e150, 0.0, 0.0]),
                max_iters=5,
                schedule=huge,
            )
        )
    assert exc.value.step_index == 1
    assert exc.value.trace is not None
    assert exc.value.trace.diverged
    assert exc.value.trace.n_rows == 1
