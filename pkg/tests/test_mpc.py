import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhmpc.config import default_setup
from rhmpc.errors import ConfigError, DimensionError
from rhmpc.grid import ControlGrid
from rhmpc.model import StateSpaceModel, discretize_zoh
from rhmpc.mpc import RmpcConfig, RmpcController, RmpcState, build_ocp, control_step
from rhmpc.ocp import SolveOptions, evaluate_cost, solve


def scalar_model():
    return StateSpaceModel([[-1.0]], [[1.0]], [[1.0]])


def cfg(**kw):
    base = dict(W_y=np.eye(1), N_p=2, N_u=2, u_min=[-100.0], u_max=[100.0], dt_sample=1.0,
                solver=SolveOptions(max_iters=200, penalty_rounds=1, tol_grad=1e-10), dt_step=0.01)
    base.update(kw)
    return RmpcConfig(**base)


class TestConfig:
    def test_defaults_from_setup(self):
        c = default_setup().rmpc
        np.testing.assert_array_equal(c.W_y, np.diag([2.5, 2.0]))
        assert c.N_p == 10 and c.N_u == 1 and c.horizon == 10.0
        assert c.solver.max_iters == 30 and c.solver.penalty_rounds == 1

    @pytest.mark.parametrize("bad", [
        dict(W_y=np.array([[1.0, 0.5], [0.0, 1.0]])),
        dict(W_y=-np.eye(1)),
        dict(N_u=3),
        dict(N_u=0),
        dict(u_min=[1.0], u_max=[1.0]),
        dict(dt_sample=0.0),
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            cfg(**bad)


class TestBuildOcp:
    def test_equilibrium_has_zero_cost(self):
        m = default_setup().model
        u_eq = np.array([1.5, -0.7])
        x_eq = -np.linalg.solve(m.A, m.B @ u_eq)
        c = default_setup().rmpc
        p = build_ocp(m, x_eq, m.C @ x_eq, c)
        f, _ = evaluate_cost(p, ControlGrid.uniform(0.0, c.horizon, [u_eq]), x_eq)
        assert f == pytest.approx(0.0, abs=1e-20)

    def test_weight_scaling(self):
        m = scalar_model()
        u = ControlGrid.uniform(0.0, 2.0, [[0.3], [-1.0]])
        f1, _ = evaluate_cost(build_ocp(m, [0.5], [1.0], cfg()), u, [0.5])
        f2, _ = evaluate_cost(build_ocp(m, [0.5], [1.0], cfg(W_y=2 * np.eye(1))), u, [0.5])
        assert f2 == 2 * f1

    def test_hand_cost_on_static_toy(self):
        # A = 0, B = 0: outputs stay at C x, so the cost is (1 + T) e' W e
        m = StateSpaceModel(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2))
        c = RmpcConfig(W_y=np.diag([2.5, 2.0]), N_p=10, N_u=10, u_min=[-1, -1], u_max=[1, 1])
        x = np.array([0.4, -0.2])
        r = np.array([0.1, 0.3])
        p = build_ocp(m, x, r, c)
        f, _ = evaluate_cost(p, ControlGrid.uniform(0.0, 10.0, np.zeros((10, 2))), x)
        e = x - r
        assert f == pytest.approx(11.0 * (2.5 * e[0] ** 2 + 2.0 * e[1] ** 2), rel=1e-13)
        assert p.horizon == (0.0, 10.0)
        assert not (p.trajectory_ineq or p.endpoint_ineq or p.endpoint_eq)

    def test_dimension_checks(self):
        with pytest.raises(DimensionError):
            build_ocp(scalar_model(), [0.0, 0.0], [0.0], cfg())
        with pytest.raises(DimensionError):
            build_ocp(scalar_model(), [0.0], [0.0, 1.0], cfg())

    def test_analytic_derivatives_match_finite_differences(self):
        setup = default_setup()
        rng = np.random.default_rng(0)
        x, r = rng.normal(size=4), rng.normal(size=2)
        p = build_ocp(setup.model, x, r, setup.rmpc)
        u = ControlGrid.uniform(0.0, 10.0, rng.normal(size=(1, 2)))
        from rhmpc.ocp import gradient
        ga, _ = gradient(p, u, x, mode="adjoint")
        gf, _ = gradient(p, u, x, mode="finite_difference")
        np.testing.assert_allclose(ga, gf, rtol=1e-6)


def dense_lq_oracle(N, dt, x0, r):
    """Least squares over the exact ZOH map, with the integral cost by fine trapezoid sums."""
    m = scalar_model()
    n_fine = 2000
    h = N * dt / n_fine
    d = discretize_zoh(m, h)
    a, b = d.A[0, 0], d.B[0, 0]

    def outputs(u, x):
        ys = [x]
        for k in range(n_fine):
            x = a * x + b * u[min(int(k * h / dt), N - 1)]
            ys.append(x)
        return np.array(ys)

    w = np.full(n_fine + 1, h)
    w[[0, -1]] = h / 2
    w[-1] += 1.0
    sw = np.sqrt(w)
    base = sw * (outputs(np.zeros(N), x0) - r)
    M = np.column_stack([sw * outputs(np.eye(N)[j], 0.0) for j in range(N)])
    return np.linalg.lstsq(M, -base, rcond=None)[0]


class TestControlStep:
    def test_equilibrium_holds_input(self):
        setup = default_setup()
        m = setup.model
        u_eq = np.array([0.0, 0.0])
        state = RmpcState()
        u = control_step(state, m, np.zeros(4), np.zeros(2), setup.rmpc)
        np.testing.assert_allclose(u, u_eq, atol=1e-3)

    def test_batch_least_squares_oracle(self):
        c = cfg()
        state = RmpcState()
        u = control_step(state, scalar_model(), [0.5], [2.0], c)
        expected = dense_lq_oracle(2, 1.0, 0.5, 2.0)
        assert u[0] == pytest.approx(expected[0], abs=1e-3)
        np.testing.assert_allclose(state.last_result.u_star.values.ravel(), expected, atol=1e-3)

    def test_unreachable_reference_pins_bound(self):
        c = cfg(N_u=1, u_min=[-1.0], u_max=[1.0])
        u = control_step(RmpcState(), scalar_model(), [0.0], [50.0], c)
        assert u[0] == 1.0
        u = control_step(RmpcState(), scalar_model(), [0.0], [-50.0], c)
        assert u[0] == -1.0

    def test_warm_start_shifts_by_one_sample(self):
        c = cfg(N_u=2)
        ctl = RmpcController(scalar_model(), c)
        ctl.step([0.5], [2.0])
        first = ctl.state.u_prev_grid.values.ravel().copy()
        from rhmpc.mpc import initial_guess
        np.testing.assert_array_equal(initial_guess(ctl.state, c, 1).values.ravel(), [first[1], first[1]])

    def test_cold_start_uses_previous_move(self):
        c = cfg(N_u=1, warm_start=False, u_min=[-1.0], u_max=[1.0])
        from rhmpc.mpc import initial_guess
        state = RmpcState(u_prev_applied=np.array([3.0]))
        assert initial_guess(state, c, 1).values[0, 0] == 1.0
        assert initial_guess(RmpcState(), c, 1).values[0, 0] == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_falls_back(self):
        m = StateSpaceModel([[1e3]], [[1.0]], [[1.0]])
        c = cfg(N_u=1, dt_step=1.0, N_p=10)
        state = RmpcState(u_prev_applied=np.array([0.25]))
        u = control_step(state, m, [1e200], [0.0], c)
        assert state.fallback and u[0] == 0.25


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_warm_start_never_worse_than_cold(seed):
    setup = default_setup()
    rng = np.random.default_rng(seed)
    m, c = setup.model, setup.rmpc
    cold_cfg = RmpcConfig(**{**c.__dict__, "warm_start": False})
    state = RmpcState()
    x = rng.normal(size=4)
    r = rng.normal(size=2)
    control_step(state, m, x, r, c)
    x2 = x + 0.05 * rng.normal(size=4)
    from rhmpc.mpc import initial_guess
    p = build_ocp(m, x2, r, c)
    warm = solve(p, initial_guess(state, c, 2), x2, c.solver).f_star
    cold = solve(p, initial_guess(RmpcState(u_prev_applied=state.u_prev_applied), cold_cfg, 2), x2, c.solver).f_star
    assert warm <= cold + 1e-9


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.2, 20.0))
def test_argmin_invariant_under_weight_scaling(seed, alpha):
    rng = np.random.default_rng(seed)
    c = cfg(N_u=2, W_y=np.eye(1))
    x, r = rng.normal(size=1), rng.normal(size=1)
    a = control_step(RmpcState(), scalar_model(), x, r, c)
    b = control_step(RmpcState(), scalar_model(), x, r, cfg(N_u=2, W_y=alpha * np.eye(1)))
    assert np.abs(a - b).max() < 1e-4


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_applied_move_within_bounds(seed):
    setup = default_setup()
    rng = np.random.default_rng(seed)
    u = control_step(RmpcState(), setup.model, rng.normal(size=4) * 20, rng.normal(size=2) * 20, setup.rmpc)
    assert np.all(u >= setup.rmpc.u_min) and np.all(u <= setup.rmpc.u_max)
