import math

import numpy as np
import pytest

from teleadapt.controller import GainConfig
from teleadapt.dynamics import (
    JointState,
    eval_dynamics,
    forward_dynamics,
    theta_from_params,
)
from teleadapt.sim import (
    ForceProfile,
    NumericalDivergence,
    ScenarioConfig,
    Wall,
    default_config,
    environment_force,
    human_force,
    lyapunov_diagnostic,
    make_initial_state,
    run_scenario,
    sim_step,
)
from teleadapt.stability import lmi_feasible, stability_constants


class TestHumanForce:
    def test_before_window(self):
        np.testing.assert_allclose(human_force(ForceProfile(5.0, 2.0, 15.0), 1.0), [0, 0])

    def test_inside_window(self):
        np.testing.assert_allclose(human_force(ForceProfile(5.0, 2.0, 15.0), 7.3), [0, 5.0])

    def test_empty_window(self):
        p = ForceProfile(5.0, 2.0, 2.0)
        for t in np.linspace(0, 20, 23):
            assert np.all(human_force(p, t) == 0.0)


class TestEnvironmentForce:
    def test_no_contact(self):
        cfg = default_config("B")
        # end-effector at y = 0.59 < wall
        q = [math.asin(0.59 / 0.8), 0.0]
        np.testing.assert_allclose(
            environment_force(cfg.slave, q, Wall(y=0.6, stiffness=1e4)), [0, 0]
        )

    def test_penetration_force(self):
        cfg = default_config("B")
        q = [math.asin(0.601 / 0.8), 0.0]
        F = environment_force(cfg.slave, q, Wall(y=0.6, stiffness=1e4))
        assert F[0] == 0.0
        assert F[1] == pytest.approx(-10.0, abs=1e-6)

    def test_disabled_wall(self):
        cfg = default_config("A")
        q = [1.0, 0.3]
        np.testing.assert_allclose(
            environment_force(cfg.slave, q, Wall(y=0.6, stiffness=0.0)), [0, 0]
        )


def quiet_config(**kw):
    cfg = default_config("A")
    cfg.force = ForceProfile(amplitude=0.0, start=0.0, stop=0.0)
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


class TestSimStep:
    def test_equilibrium_with_true_parameters(self):
        cfg = quiet_config()
        cfg.theta0_m = theta_from_params(cfg.master)
        cfg.theta0_s = theta_from_params(cfg.slave)
        st = make_initial_state(cfg)
        for k in range(200):
            st = sim_step(st, k * cfg.dt, cfg.dt, cfg)
        assert np.abs(st.q_m).max() < 1e-9
        assert np.abs(st.q_s).max() < 1e-9
        assert np.abs(st.qd_m).max() < 1e-9
        np.testing.assert_allclose(st.ctrl_m.theta_hat, cfg.theta0_m, atol=1e-9)

    def test_decoupled_step_is_plain_forward_dynamics(self):
        # zero gains, zero estimates, zero force: one step must match a
        # 4-stage integration of the free arm
        cfg = quiet_config(mode="classical")
        cfg.gains_m = GainConfig(
            K=np.zeros((2, 2)), lam=0.0, Gamma=np.zeros((5, 5)),
        )
        cfg.gains_s = GainConfig(K=np.zeros((2, 2)), lam=0.0, Gamma=np.zeros((5, 5)))
        cfg.theta0_m = np.zeros(5)
        cfg.theta0_s = np.zeros(5)
        st = make_initial_state(cfg)
        st.q_m[:] = [0.4, -0.2]
        st.q_s[:] = [0.4, -0.2]
        dt = cfg.dt
        out = sim_step(st, 0.0, dt, cfg)

        def f(q, qd):
            return qd, forward_dynamics(cfg.master, JointState(q=q, qd=qd), [0, 0], [0, 0])

        q0, qd0 = np.array([0.4, -0.2]), np.zeros(2)
        k1q, k1v = f(q0, qd0)
        k2q, k2v = f(q0 + dt / 2 * k1q, qd0 + dt / 2 * k1v)
        k3q, k3v = f(q0 + dt / 2 * k2q, qd0 + dt / 2 * k2v)
        k4q, k4v = f(q0 + dt * k3q, qd0 + dt * k3v)
        q1 = q0 + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v1 = qd0 + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        np.testing.assert_allclose(out.q_m, q1, atol=1e-15)
        np.testing.assert_allclose(out.qd_m, v1, atol=1e-15)

    def test_energy_conservation_order(self):
        # free swing with no control: per-run Hamiltonian drift shrinks
        # ~16x when dt is halved (4th-order scheme)
        def drift(dt):
            cfg = quiet_config(mode="classical", dt=dt)
            cfg.gains_m = GainConfig(K=np.zeros((2, 2)), lam=0.0, Gamma=np.zeros((5, 5)))
            cfg.gains_s = GainConfig(K=np.zeros((2, 2)), lam=0.0, Gamma=np.zeros((5, 5)))
            cfg.theta0_m = np.zeros(5)
            cfg.theta0_s = np.zeros(5)
            st = make_initial_state(cfg)
            st.q_m[:] = [0.3, 0.4]
            st.q_s[:] = [0.3, 0.4]
            th = theta_from_params(cfg.master)
            g = cfg.master.g

            def hamiltonian(q, qd):
                M, _, _ = eval_dynamics(cfg.master, JointState(q=q, qd=qd))
                pot = g * (th[4] * math.sin(q[0]) + th[3] * math.sin(q[0] + q[1]))
                return 0.5 * qd @ M @ qd + pot

            h0 = hamiltonian(st.q_m, st.qd_m)
            n = int(round(0.5 / dt))
            worst = 0.0
            for k in range(n):
                st = sim_step(st, k * dt, dt, cfg)
                worst = max(worst, abs(hamiltonian(st.q_m, st.qd_m) - h0))
            return worst

        d1 = drift(2e-3)
        d2 = drift(1e-3)
        assert d2 < d1 / 10.0

    def test_divergence_detected(self):
        cfg = default_config("A")
        cfg.dt = 0.05  # way past the stability limit of the stiff gains
        st = make_initial_state(cfg)
        with pytest.raises(NumericalDivergence):
            for k in range(200):
                st = sim_step(st, k * cfg.dt, cfg.dt, cfg)


class TestRunScenario:
    def test_zero_horizon_single_record(self):
        cfg = default_config("A")
        cfg.horizon = 0.0
        log = run_scenario(cfg)
        assert log.data.shape[0] == 1
        assert log.t[0] == 0.0

    def test_row_count(self):
        cfg = default_config("A")
        cfg.horizon = 0.002
        log = run_scenario(cfg)
        assert log.data.shape[0] == 21

    def test_determinism_bit_identical(self):
        cfg1 = default_config("A")
        cfg1.horizon = 0.5
        log1 = run_scenario(cfg1)
        cfg2 = default_config("A")
        cfg2.horizon = 0.5
        log2 = run_scenario(cfg2)
        assert np.array_equal(log1.data, log2.data)
        assert np.array_equal(log1.zeta_m, log2.zeta_m)

    def test_refinement(self):
        cfg = default_config("A")
        cfg.horizon = 0.5
        end1 = run_scenario(cfg).q_m[-1]
        cfg2 = default_config("A")
        cfg2.horizon = 0.5
        cfg2.dt = cfg.dt / 2
        end2 = run_scenario(cfg2).q_m[-1]
        assert np.abs(end1 - end2).max() < 1e-6

    def test_force_scale(self):
        cfg = default_config("A")
        cfg.horizon = 0.0
        cfg.force = ForceProfile(amplitude=5.0, start=0.0, stop=1.0)
        cfg.force_scale = 10.0
        log = run_scenario(cfg)
        # joint torque of a pure-Y force at q = 0 is (0.8, 0.3) * Fy
        np.testing.assert_allclose(
            [log.col("F_m1")[0], log.col("F_m2")[0]], [0.8 * 50.0, 0.3 * 50.0], rtol=1e-12
        )


class TestLyapunovDiagnostic:
    def test_zero_run_gives_zero(self):
        cfg = quiet_config()
        cfg.theta0_m = theta_from_params(cfg.master)
        cfg.theta0_s = theta_from_params(cfg.slave)
        cfg.horizon = 0.01
        log = run_scenario(cfg)
        np.testing.assert_allclose(log.V, 0.0, atol=1e-18)

    def test_estimation_term_only(self):
        cfg = quiet_config()
        cfg.horizon = 0.0
        log = run_scenario(cfg)
        gm, gs = cfg.gains_m, cfg.gains_s
        tm = theta_from_params(cfg.master) - cfg.theta0_m
        ts = theta_from_params(cfg.slave) - cfg.theta0_s
        expected = (2.0 / (100.0 * gm.lam)) * 0.5 * tm @ np.linalg.inv(gm.Gamma) @ tm
        expected += (2.0 / (100.0 * gs.lam)) * 0.5 * ts @ np.linalg.inv(gs.Gamma) @ ts
        assert log.V[0] == pytest.approx(expected, rel=1e-9)

    def test_windowed_log_requires_history(self):
        cfg = default_config("A")
        cfg.horizon = 1.0
        log = run_scenario(cfg)
        consts = stability_constants(
            cfg.master, cfg.slave, cfg.gains_m, cfg.gains_s, cfg.delay_m, cfg.delay_s
        )
        witness = lmi_feasible(consts)
        t, V = lyapunov_diagnostic(log, consts, witness)
        assert len(t) == len(V) == log.data.shape[0]
        # windowed slice shorter than the max delay is rejected
        import dataclasses

        short = dataclasses.replace(log, data=log.data[5000:8000].copy())
        with pytest.raises(ValueError):
            lyapunov_diagnostic(short, consts, witness)
