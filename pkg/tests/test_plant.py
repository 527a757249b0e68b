import numpy as np
import pytest

from rhmpc.config import default_setup
from rhmpc.errors import DivergenceError
from rhmpc.model import StateSpaceModel
from rhmpc.plant import (ConstantController, Disturbance, Scenario, SurrogatePlant, TraceLog, plant_step,
                         run_closed_loop, surrogate_core)

U_OP, Y_OP = np.array([48.79, 36.45]), np.array([-22.15, 14.65])


def nominal(**kw):
    core = default_setup().model
    return SurrogatePlant(core, U_OP, Y_OP, [10.0, 30.0], [100.0, 50.0], **kw)


class TestSurrogateCore:
    def test_dc_gain_and_signs(self):
        m = default_setup().model
        K = -m.C @ np.linalg.solve(m.A, m.B)
        np.testing.assert_allclose(K, [[0.06, -0.30], [-0.35, -0.25]], atol=1e-14)
        assert K[0, 0] > 0 and K[1, 0] < 0 and K[0, 1] < 0 and K[1, 1] < 0
        assert np.all(np.linalg.eigvals(m.A).real < 0)

    def test_structure(self):
        m = surrogate_core([[1.0, 2.0]], [[10.0, 20.0]], split=0.25)
        np.testing.assert_allclose(m.A, [[-0.1, 0.1], [0.0, -0.05]])
        np.testing.assert_allclose(m.B, [[0.025, 0.05], [0.0375, 0.075]])

    def test_validation(self):
        with pytest.raises(ValueError):
            surrogate_core([[1.0]], [[-1.0, 2.0]])
        with pytest.raises(ValueError):
            surrogate_core([[1.0]], [[1.0, 2.0]], split=1.5)


class TestPlantStep:
    def test_equilibrium_hold(self):
        p = nominal()
        for _ in range(10):
            y = plant_step(p, U_OP, 1.0)
        np.testing.assert_array_equal(y, Y_OP)

    def test_commands_are_clipped(self):
        p = nominal()
        assert np.all(p.advance([200.0, 100.0], 1.0) == [100.0, 50.0])
        q = nominal()
        q.advance([100.0, 50.0], 1.0)
        np.testing.assert_array_equal(p.x, q.x)

    def test_step_response_settles_at_dc_gain(self):
        p = nominal()
        m = p.core
        du = np.array([5.0, 0.0])
        for _ in range(1500):
            y = plant_step(p, U_OP + du, 1.0)
        expected = -m.C @ np.linalg.solve(m.A, m.B @ du)
        np.testing.assert_allclose(y - Y_OP, expected, atol=1e-6)

    def test_gain_mismatch_scales_inputs(self):
        p = nominal(gain_mismatch=[1.2, 0.8])
        for _ in range(1500):
            y = plant_step(p, U_OP + [1.0, 1.0], 1.0)
        K = [[0.06, -0.30], [-0.35, -0.25]]
        np.testing.assert_allclose(y - Y_OP, np.array(K) @ [1.2, 0.8], atol=1e-6)

    def test_output_nonlinearity(self):
        p = nominal(nonlinearity_eps=0.1, coupling=[[1.0, 0.0], [0.0, 2.0]])
        y_lin = np.array([2.0, -1.0])
        np.testing.assert_allclose(p.output_map(y_lin), y_lin + 0.1 * y_lin * np.array([2.0, -2.0]))

    def test_noise_is_seeded(self):
        runs = []
        for _ in range(2):
            p = nominal(sigma_v=[0.1, 0.1], sigma_w=[0.01] * 4, seed=7)
            runs.append([plant_step(p, U_OP, 1.0) for _ in range(5)])
        np.testing.assert_array_equal(runs[0], runs[1])
        assert np.std(np.array(runs[0])[:, 0]) > 0

    def test_divergence(self):
        core = StateSpaceModel([[1000.0]], [[1.0]], [[1.0]])
        p = SurrogatePlant(core, [0.0], [0.0], [-1.0], [1.0], dt_step=1.0)
        p.reset(x0=[1e300])
        with pytest.raises(DivergenceError):
            with np.errstate(over="ignore", invalid="ignore"):
                for _ in range(5):
                    p.advance([0.0], 1.0)

    def test_invalid_limits(self):
        with pytest.raises(ValueError):
            SurrogatePlant(default_setup().model, U_OP, Y_OP, [10.0, 30.0], [10.0, 50.0])
        with pytest.raises(ValueError):
            nominal(sigma_v=[-1.0, 0.0])


class TestScenario:
    def test_step_appears_on_its_sample(self):
        sc = Scenario(10.0, (((3.0, 1.0),), ()))
        assert sc.reference(2.0, [0.0, 0.0])[0] == 0.0
        assert sc.reference(3.0, [0.0, 0.0])[0] == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            Scenario(10.0, (((11.0, 1.0),), ()))
        with pytest.raises(ValueError):
            Scenario(10.0, (((5.0, 1.0), (4.0, 2.0)),))
        with pytest.raises(ValueError):
            Disturbance(1.0, "input", 0, 1.0)


class TestClosedLoop:
    def test_constant_controller_at_equilibrium(self):
        p = nominal()
        sc = Scenario(50.0, ((), ()))
        log = run_closed_loop(p, ConstantController(U_OP, 4), sc, 1.0)
        assert len(log) == 50
        assert np.abs(log.y - Y_OP).max() <= 1e-9
        assert np.all(log.u_applied == U_OP)

    def test_rmpc_equilibrium_stays_put(self):
        s = default_setup(
            plant={"gain_mismatch": [1.0, 1.0]},
            scenario={"duration": 30.0, "references": [[], []], "disturbances": []},
        )
        log = run_closed_loop(s.plant, s.controller("rmpc"), s.scenario, s.dt_sample)
        assert np.abs(log.y - Y_OP).max() <= 1e-9
        assert np.abs(log.x_true).max() <= 1e-9
        assert np.abs(log.u_applied - U_OP).max() <= 1e-9

    def test_reference_steps_on_schedule(self, setup, pid_trace):
        t = pid_trace.t
        assert np.all(pid_trace.r_d[t < 120, 0] == Y_OP[0]) and np.all(pid_trace.r_d[t >= 120, 0] == -23.15)
        assert np.all(pid_trace.r_d[t < 540, 1] == Y_OP[1]) and np.all(pid_trace.r_d[t >= 540, 1] == 10.65)

    def test_output_disturbance_on_schedule(self, pid_trace):
        k = 840
        jump = pid_trace.y_noisefree[k] - pid_trace.y_noisefree[k - 1]
        assert jump[0] == pytest.approx(0.5, abs=0.02) and jump[1] == pytest.approx(-1.0, abs=0.02)

    def test_state_disturbance(self):
        p = nominal()
        sc = Scenario(5.0, ((), ()), (Disturbance(2.0, "state", 0, 1.0),))
        log = run_closed_loop(p, ConstantController(U_OP, 4), sc, 1.0)
        assert log.x_true[1, 0] == 0.0 and log.x_true[2, 0] == 1.0

    def test_trace_layout(self, rmpc_trace, pid_trace):
        assert len(rmpc_trace) == 1200 and rmpc_trace.t[-1] == 1199.0
        assert np.all(np.diff(rmpc_trace.t) == 1.0)
        assert np.all(np.isnan(pid_trace.x_hat)) and np.all(pid_trace.solver_iterations == 0)
        assert rmpc_trace.solver_iterations.max() > 0
        assert rmpc_trace.columns()[:3] == ["t", "r_d_0", "r_d_1"]

    def test_csv_round_trip(self, tmp_path, rmpc_trace):
        path = tmp_path / "trace.csv"
        rmpc_trace.to_csv(path)
        back = TraceLog.from_csv(path)
        for name in ("t", "y", "u_applied", "x_hat", "r_mpc"):
            np.testing.assert_array_equal(getattr(back, name), getattr(rmpc_trace, name))
        np.testing.assert_array_equal(back.solver_converged, rmpc_trace.solver_converged)

    def test_deterministic_with_noise(self):
        s = default_setup(
            plant={"noise": {"sigma_v": [0.02, 0.05]}},
            scenario={"duration": 40.0, "references": [[[10.0, -22.5]], []], "disturbances": []},
        )
        a = run_closed_loop(s.plant, s.controller("pid"), s.scenario, s.dt_sample, seed=3)
        b = run_closed_loop(s.plant, s.controller("pid"), s.scenario, s.dt_sample, seed=3)
        c = run_closed_loop(s.plant, s.controller("pid"), s.scenario, s.dt_sample, seed=4)
        np.testing.assert_array_equal(a.y, b.y)
        assert not np.array_equal(a.y, c.y)

    def test_limits_never_exceeded(self, rmpc_trace, pid_trace):
        for log in (rmpc_trace, pid_trace):
            assert np.all(log.u_applied >= [10.0, 30.0]) and np.all(log.u_applied <= [100.0, 50.0])
