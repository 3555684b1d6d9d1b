"""Online coupled integrator tests.

The stock interval problem gives exact oracles: with the parameter vector
frozen, the state gap contracts by exactly (1 - dt * lambda_1) per step
when only the first mode is excited, and two hand-stepped Euler updates
pin down the Jacobi ordering (every update reads pre-step values).
"""

import numpy as np
import pytest

from adjointflow.diagnostics import fit_rate
from adjointflow.elliptic import EllipticCoefficients, adjoint, assemble
from adjointflow.errors import (
    BoundaryDataError,
    ConformabilityError,
    DivergenceError,
    ScheduleComplianceError,
    StabilityError,
)
from adjointflow.linsolve import SolverConfig, solve_steady_info
from adjointflow.mesh import Field, Grid, sample_function
from adjointflow.objective import TargetProfile
from adjointflow.online import (
    OnlineRunConfig,
    OnlineState,
    Schedule,
    StepSize,
    cfl_bound,
    online_step,
    run_online,
)
from adjointflow.source import CallableSource, eval_field
from adjointflow.stock import build_stock


def top_eigenvalue(n):
    h = 1.0 / (n + 1)
    return (2.0 / h**2) * (1.0 - np.cos(n * np.pi * h))


class TestCflBound:
    def test_interval_bound_matches_eigenvalue_formula(self):
        # the top two eigenvalues nearly coincide at this size, which slows
        # the power iteration; the 0.9 safety factor dwarfs the residual slack
        n = 255
        op = assemble(Grid.interval(n), EllipticCoefficients.poisson())
        want = 2.0 / top_eigenvalue(n)  # 7.6297e-6 at n = 255
        assert cfl_bound(op) == pytest.approx(want, rel=5e-4)
        assert want == pytest.approx(7.6297e-6, rel=1e-4)

    def test_reaction_shift_tightens_bound(self):
        g = Grid.interval(15)
        base = assemble(g, EllipticCoefficients.poisson())
        shifted = assemble(g, EllipticCoefficients(c=5.0))
        want = 2.0 / (top_eigenvalue(15) + 5.0)
        assert cfl_bound(shifted) == pytest.approx(want, rel=1e-6)
        assert cfl_bound(shifted) < cfl_bound(base)

    def test_square_bound_adds_axis_eigenvalues(self):
        op = assemble(Grid.box(15, 15), EllipticCoefficients.poisson())
        want = 2.0 / (2.0 * top_eigenvalue(15))
        assert cfl_bound(op) == pytest.approx(want, rel=1e-6)

    def test_advection_uses_disk_criterion(self):
        n = 31
        g = Grid.interval(n)
        op = assemble(g, EllipticCoefficients(b=3.0))
        rho = top_eigenvalue(n)  # central advection is skew, symmetric part is pure diffusion
        h = g.spacing[0]
        omega = 3.0 / h  # largest skew row sum: two entries of b/(2h)
        want = 2.0 * rho / (rho**2 + omega**2)
        assert cfl_bound(op) == pytest.approx(want, rel=1e-6)
        assert cfl_bound(op) < 2.0 / rho


class TestSchedule:
    def test_values(self):
        assert Schedule("inverse-linear", 2.0).alpha(3.0) == pytest.approx(0.5)
        assert Schedule("constant", 0.25).alpha(100.0) == 0.25
        s = Schedule("custom-power", 1.0, exponent=0.75)
        assert s.alpha(15.0) == pytest.approx(16.0**-0.75)
        c = Schedule("custom", fn=lambda t: 1.0 / (1.0 + t) ** 2)
        assert c.alpha(1.0) == pytest.approx(0.25)

    def test_array_evaluation(self):
        out = Schedule("inverse-linear", 1.0).alpha(np.array([0.0, 1.0, 3.0]))
        assert np.allclose(out, [1.0, 0.5, 0.25])

    def test_kernel_codes(self):
        assert Schedule("inverse-linear").kernel_code == 0
        assert Schedule("constant", 0.1).kernel_code == 1
        assert Schedule("custom-power", exponent=0.6).kernel_code == 2
        assert Schedule("custom", fn=lambda t: 1.0).kernel_code is None

    def test_validation(self):
        with pytest.raises(ValueError):
            Schedule("harmonic")
        with pytest.raises(ValueError):
            Schedule("inverse-linear", 0.0)
        with pytest.raises(ValueError):
            Schedule("constant", -1.0)
        with pytest.raises(ValueError):
            Schedule("inverse-linear", np.inf)
        with pytest.raises(ValueError):
            Schedule("custom")  # fn missing
        with pytest.raises(ValueError):
            Schedule("inverse-linear", fn=lambda t: 1.0)
        # zero constant rate is allowed: freezes theta for relaxation studies
        assert Schedule("constant", 0.0).alpha(1.0) == 0.0


class TestStepSize:
    def test_budget_enforced(self):
        with pytest.raises(StabilityError):
            StepSize(1.0, cfl_limit=1.0, safety=0.9)

    def test_force_downgrades_to_warning(self):
        with pytest.warns(UserWarning, match="stability bound"):
            s = StepSize(1.0, cfl_limit=1.0, safety=0.9, force=True)
        assert s.delta == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            StepSize(0.0)
        with pytest.raises(ValueError):
            StepSize(np.nan)
        with pytest.raises(ValueError):
            StepSize(0.1, safety=1.5)

    def test_from_operator(self):
        op = assemble(Grid.interval(31), EllipticCoefficients.poisson())
        s = StepSize.from_operator(op)
        assert s.cfl_limit == pytest.approx(2.0 / top_eigenvalue(31), rel=1e-6)
        assert s.delta == pytest.approx(0.9 * s.cfl_limit)


class TestSingleStep:
    def setup_method(self):
        self.s = build_stock(d=1, theta_true=(1.0,), gamma=0.01)
        self.op_adj = adjoint(self.s.op)
        self.dt = StepSize.from_operator(self.s.op)
        self.sched = self.s.schedule(c_alpha=2.0)

    def make_state(self):
        g = self.s.grid
        return OnlineState(
            u=Field.zeros(g), u_hat=Field.zeros(g), theta=self.s.theta_vector()
        )

    def test_two_steps_match_hand_euler(self):
        # from the zero state: u stays zero (f(x, 0) = 0), u_hat picks up
        # -dt * h then integrates the adjoint residual, theta moves only once
        # u_hat is nonzero, and the second theta update must read the
        # pre-step u_hat (Jacobi ordering)
        s, g = self.s, self.s.grid
        d = self.dt.delta
        h = s.target.h.values
        w = g.quad_weights
        basis = s.model.basis_matrix(g)[:, 0]
        a_adj = self.op_adj

        st1 = online_step(
            self.make_state(), s.op, a_adj, s.model, s.target, self.sched, self.dt
        )
        assert np.all(st1.u.values == 0.0)
        uh1 = np.zeros_like(h)
        ii = g.interior_indices
        uh1[ii] = -d * h[ii]
        assert np.max(np.abs(st1.u_hat.values - uh1)) == 0.0
        assert st1.theta.values[0] == 0.0  # u_hat was zero when theta updated
        assert st1.t == pytest.approx(d) and st1.step_count == 1

        st2 = online_step(st1, s.op, a_adj, s.model, s.target, self.sched, self.dt)
        uh1_field = Field(g, uh1)
        from adjointflow.elliptic import apply

        uh2 = uh1[ii] + d * (-h[ii] - apply(a_adj, uh1_field).values[ii])
        assert np.max(np.abs(st2.u_hat.values[ii] - uh2)) <= 1e-18
        alpha1 = self.sched.alpha(d)
        raw = float(basis @ (w * uh1))  # pre-step u_hat, not uh2
        want_theta = -alpha1 * d * raw
        assert st2.theta.values[0] == pytest.approx(want_theta, rel=1e-14)
        assert want_theta != 0.0

    def test_divergence_detected(self):
        st = OnlineState(
            u=Field.zeros(self.s.grid),
            u_hat=Field.zeros(self.s.grid),
            theta=self.s.theta_vector([np.finfo(np.float64).max]),
        )
        big = StepSize(1e6, force=True)  # dt * f overflows the state update
        with pytest.raises(DivergenceError):
            online_step(st, self.s.op, self.op_adj, self.s.model, self.s.target,
                        self.sched, big)

    def test_grid_and_dim_guards(self):
        other = build_stock(n_interior=15, d=1, theta_true=(1.0,))
        st = OnlineState(
            u=Field.zeros(other.grid),
            u_hat=Field.zeros(other.grid),
            theta=other.theta_vector(),
        )
        with pytest.raises(ConformabilityError):
            online_step(st, self.s.op, None, self.s.model, self.s.target,
                        self.sched, self.dt)
        st2 = OnlineState(
            u=Field.zeros(self.s.grid),
            u_hat=Field.zeros(self.s.grid),
            theta=build_stock(d=2, theta_true=(1.0, 0.5)).theta_vector(),
        )
        with pytest.raises(ConformabilityError):
            online_step(st2, self.s.op, None, self.s.model, self.s.target,
                        self.sched, self.dt)


class TestFrozenThetaRelaxation:
    def test_state_gap_contracts_geometrically(self):
        # freeze theta with a zero constant rate; only mode 1 is excited, so
        # the logged state gap is exactly |1 - dt*lambda_1|^k times its start
        s = build_stock(d=1, theta_true=(0.8,), gamma=0.01)
        step = StepSize.from_operator(s.op)
        cfg = OnlineRunConfig(
            op=s.op,
            model=s.model,
            target=s.target,
            theta0=s.theta_vector([0.8]),
            schedule=Schedule("constant", 0.0),
            horizon=1000 * step.delta,
            step=step,
            log_stride=100,
            allow_noncompliant=True,
        )
        trace = run_online(cfg)
        assert np.all(trace.theta == 0.8)
        lam1 = s.lambda_discrete[0]
        factor = (1.0 - step.delta * lam1) ** 100
        ratios = trace.phi_norm[1:6] / trace.phi_norm[:5]
        assert np.max(np.abs(ratios / factor - 1.0)) <= 1e-6

    def test_noncompliant_schedule_gated(self):
        s = build_stock(d=1, theta_true=(1.0,))
        cfg = OnlineRunConfig(
            op=s.op,
            model=s.model,
            target=s.target,
            theta0=s.theta_vector(),
            schedule=Schedule("constant", 0.1),
            horizon=0.01,
        )
        with pytest.raises(ScheduleComplianceError):
            run_online(cfg)


class TestRunOnline:
    def test_stationary_at_minimizer(self):
        # start on the fixed point: everything stays put up to solver noise
        s = build_stock()
        tight = SolverConfig(tol=1e-13)
        rhs = eval_field(s.model, s.grid, s.theta_star)
        ustar, _ = solve_steady_info(s.op, rhs, tight)
        uhstar, _ = solve_steady_info(adjoint(s.op), ustar - s.target.h, tight)
        cfg = s.online_config(horizon=0.1, theta0=s.theta_star, log_stride=50)
        cfg.u0 = ustar
        cfg.uhat0 = uhstar
        trace = run_online(cfg)
        assert trace.theta_err[-1] <= 1e-9
        assert np.max(trace.phi_norm) <= 1e-9
        assert np.max(trace.psi_norm) <= 1e-9

    def test_log_marks_and_cost_column(self):
        s = build_stock(d=1, theta_true=(1.0,))
        step = StepSize.from_operator(s.op)
        cfg = s.online_config(horizon=100.5 * step.delta, log_stride=7)
        cfg.step = step
        trace = run_online(cfg)
        # 101 steps: marks at 0, 7, ..., 98, then the forced final mark
        assert trace.t[0] == 0.0
        assert trace.n_rows == 16
        assert trace.t[-1] == pytest.approx(101 * step.delta)
        assert np.allclose(trace.t[1:3], [7 * step.delta, 14 * step.delta])
        assert np.array_equal(trace.cum_inner_iters[:3], [0.0, 14.0, 28.0])
        assert trace.cum_inner_iters[-1] == 202.0
        assert np.all(trace.alpha == s.schedule().alpha(trace.t))

    def test_two_runs_bit_identical(self):
        s = build_stock()
        t1 = run_online(s.online_config(horizon=1.0, log_stride=200))
        t2 = run_online(s.online_config(horizon=1.0, log_stride=200))
        for name in ("t", "J", "grad_norm", "theta_err", "phi_norm", "psi_norm",
                     "alpha", "sup_norm", "cum_inner_iters"):
            assert np.array_equal(t1.column(name), t2.column(name)), name
        assert np.array_equal(t1.theta, t2.theta)

    def test_divergence_carries_partial_trace(self):
        s = build_stock()
        cfg = s.online_config(horizon=5.0, c_alpha=1e12, log_stride=100)
        with pytest.raises(DivergenceError) as exc:
            run_online(cfg)
        err = exc.value
        assert err.step_index >= 1
        assert err.trace is not None and err.trace.diverged
        assert err.trace.n_rows >= 1
        assert err.trace.divergence_step == err.step_index

    def test_fast_path_matches_generic_path(self):
        # a callable source with the same sine profile forces the pure-python
        # stepper; trajectories must agree with the jitted path
        s = build_stock(d=2, theta_true=(1.0, -0.5))
        fast_cfg = s.online_config(horizon=0.2, log_stride=100)
        fast = run_online(fast_cfg)

        def fn(x, theta):
            return theta[0] * np.sin(np.pi * x) + theta[1] * np.sin(2 * np.pi * x)

        def grad_fn(x, theta):
            return np.column_stack([np.sin(np.pi * x), np.sin(2 * np.pi * x)])

        slow_model = CallableSource(2, fn, grad_fn=grad_fn)
        slow_cfg = OnlineRunConfig(
            op=s.op,
            model=slow_model,
            target=s.target,
            theta0=s.theta_vector(),
            schedule=s.schedule(),
            horizon=0.2,
            log_stride=100,
            theta_star=s.theta_star,
        )
        slow = run_online(slow_cfg)
        assert np.max(np.abs(fast.theta - slow.theta)) <= 1e-13
        assert np.max(np.abs(fast.phi_norm - slow.phi_norm)) <= 1e-12

    def test_custom_schedule_runs_generic_with_warning(self):
        s = build_stock(d=1, theta_true=(1.0,))
        ca = s.c_alpha
        fast = run_online(s.online_config(horizon=0.1, log_stride=50))
        cfg = s.online_config(horizon=0.1, log_stride=50)
        cfg.schedule = Schedule("custom", fn=lambda t: ca / (1.0 + t))
        with pytest.warns(UserWarning, match="without verification"):
            slow = run_online(cfg)
        assert np.max(np.abs(fast.theta - slow.theta)) <= 1e-13

    def test_fast_path_rejects_inhomogeneous_initial_state(self):
        s = build_stock(d=1, theta_true=(1.0,))
        cfg = s.online_config(horizon=0.1)
        cfg.u0 = sample_function(s.grid, lambda x: np.ones_like(x))
        with pytest.raises(BoundaryDataError):
            run_online(cfg)

    def test_conformability_guards(self):
        s = build_stock(d=1, theta_true=(1.0,))
        cfg = s.online_config(horizon=0.1)
        cfg.target = TargetProfile(Field.zeros(Grid.interval(15)))
        with pytest.raises(ConformabilityError):
            run_online(cfg)
        cfg2 = s.online_config(horizon=0.1)
        cfg2.u0 = Field.zeros(Grid.interval(15))
        with pytest.raises(ConformabilityError):
            run_online(cfg2)

    def test_single_mode_converges_at_schedule_rate(self):
        # d = 1 stock problem run long enough to see the asymptotic decay:
        # theta_err should fall at least like 1/sqrt(t) (it does much better)
        s = build_stock(d=1, theta_true=(1.0,))
        trace = run_online(s.online_config(horizon=1000.0))
        fit = fit_rate(trace.t, trace.theta_err, window=(10.0, 1000.0))
        assert fit.exponent <= -0.45
        assert fit.r_squared >= 0.95
        assert trace.theta_err[-1] <= 1e-3
