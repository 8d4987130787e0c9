"""End-to-end acceptance suite.

Each test prints one PASS line when its criterion holds (run with -s to see
them); the expensive scenario runs are shared session fixtures.
"""

import time

import numpy as np
import pytest

from teleadapt.dynamics import (
    JointState,
    eval_dynamics,
    mass_matrix_rate,
    regressor_ctrl,
    regressor_full,
    theta_from_params,
)
from teleadapt.sim import default_config, run_scenario
from teleadapt.stability import (
    MODE_FORCED,
    MODE_FREE,
    lmi_feasible,
    stability_constants,
    verify_witness,
)

MASTER = default_config("A").master
SLAVE = default_config("A").slave


def _theta_ratio(th_series, th_true):
    return np.linalg.norm(th_series - th_true[None, :], axis=1) / np.linalg.norm(th_true)


def test_acceptance_01_regressor_identities():
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    worst_full = 0.0
    worst_ctrl = 0.0
    lam = 0.5
    for params in (MASTER, SLAVE):
        th = theta_from_params(params)
        for _ in range(5000):
            s = JointState(q=rng.uniform(-np.pi, np.pi, 2), qd=rng.uniform(-3, 3, 2))
            qdd = rng.uniform(-10, 10, 2)
            e = rng.uniform(-1, 1, 2)
            ev = rng.uniform(-1, 1, 2)
            M, C, G = eval_dynamics(params, s)
            r_full = regressor_full(s, qdd, params.g) @ th - (M @ qdd + C @ s.qd + G)
            r_ctrl = regressor_ctrl(s, e, ev, lam, params.g) @ th - (
                M @ (lam * ev) + C @ (lam * e) - G
            )
            worst_full = max(worst_full, np.abs(r_full).max())
            worst_ctrl = max(worst_ctrl, np.abs(r_ctrl).max())
    elapsed = time.perf_counter() - t0
    assert worst_full < 1e-10
    assert worst_ctrl < 1e-10
    assert elapsed < 1.0
    print(
        f"ACCEPTANCE 1 PASS: regressor identities, residuals "
        f"{worst_full:.2e}/{worst_ctrl:.2e} in {elapsed:.2f} s"
    )


def test_acceptance_02_skew_symmetry():
    rng = np.random.default_rng(101)
    worst = 0.0
    for params in (MASTER, SLAVE):
        for _ in range(5000):
            s = JointState(q=rng.uniform(-np.pi, np.pi, 2), qd=rng.uniform(-3, 3, 2))
            x = rng.uniform(-1, 1, 2)
            Md = mass_matrix_rate(params, s.q, s.qd)
            _, C, _ = eval_dynamics(params, s)
            worst = max(worst, abs(x @ (Md - 2 * C) @ x))
    assert worst < 1e-8
    print(f"ACCEPTANCE 2 PASS: skew symmetry, worst quadratic form {worst:.2e}")


def test_acceptance_03_lmi_feasibility():
    cfg = default_config("A")
    t0 = time.perf_counter()
    consts = stability_constants(
        cfg.master, cfg.slave, cfg.gains_m, cfg.gains_s, cfg.delay_m, cfg.delay_s
    )
    margins = {}
    for mode in (MODE_FREE, MODE_FORCED):
        w = lmi_feasible(consts, mode)
        assert w is not None, f"certificate infeasible in mode {mode}"
        margins[mode] = w.margin
    unit_margin = verify_witness(consts, 1.0, 1.0, MODE_FREE)
    elapsed = time.perf_counter() - t0
    assert unit_margin < -0.05
    assert elapsed < 1.0
    print(
        f"ACCEPTANCE 3 PASS: certificate feasible (margins {margins[MODE_FREE]:.3f}/"
        f"{margins[MODE_FORCED]:.3f}), unit witness margin {unit_margin:.3f}, {elapsed:.2f} s"
    )


def test_acceptance_04_adaptive_invariants(scenario_a_composite):
    log = scenario_a_composite.log
    cfg = log.config
    assert cfg.dt == 1e-4 and cfg.horizon == 20.0
    lmin_floor_m = log.col("lmin_P_m").min()
    lmin_floor_s = log.col("lmin_P_s").min()
    assert lmin_floor_m >= cfg.gains_m.kappa0 - 1e-6
    assert lmin_floor_s >= cfg.gains_s.kappa0 - 1e-6
    mu_min = min(log.col("mu_m").min(), log.col("mu_s").min())
    assert mu_min >= -1e-9
    step_growth = max(np.diff(log.zeta_m).max(), np.diff(log.zeta_s).max())
    assert step_growth <= 1e-4
    print(
        f"ACCEPTANCE 4 PASS: floors {lmin_floor_m:.7f}/{lmin_floor_s:.7f}, "
        f"mu_min {mu_min:.1e}, auxiliary mismatch growth {step_growth:.1e}/step"
    )


def test_acceptance_05_synchronization(scenario_a_composite):
    log = scenario_a_composite.log
    t = log.t
    win = (t >= 12.0) & (t <= 20.0)
    sync = np.abs(log.q_m - log.q_s).max(axis=1)[win].max()
    assert sync < 0.01
    assert scenario_a_composite.wall_time < 60.0
    print(
        f"ACCEPTANCE 5 PASS: max joint mismatch {sync:.5f} rad on [12, 20] s, "
        f"run took {scenario_a_composite.wall_time:.1f} s"
    )


def test_acceptance_06_parameter_convergence(scenario_a_composite, scenario_a_classical):
    comp = scenario_a_composite.log
    clas = scenario_a_classical.log
    rm = _theta_ratio(comp.theta_m, comp.theta_true_m)[-1]
    rs = _theta_ratio(comp.theta_s, comp.theta_true_s)[-1]
    rm_c = _theta_ratio(clas.theta_m, clas.theta_true_m)[-1]
    rs_c = _theta_ratio(clas.theta_s, clas.theta_true_s)[-1]
    assert rm < 0.05 and rs < 0.05, f"composite ratios {rm:.3f}/{rs:.3f}"
    assert rm_c > 0.05 and rs_c > 0.05, f"classical ratios {rm_c:.3f}/{rs_c:.3f}"
    print(
        f"ACCEPTANCE 6 PASS: composite estimate error {rm:.4f}/{rs:.4f}, "
        f"classical {rm_c:.4f}/{rs_c:.4f}"
    )


def test_acceptance_07_tracking_index_ordering(scenario_a_composite, scenario_a_classical):
    comp = scenario_a_composite.log.dp_index
    clas = scenario_a_classical.log.dp_index
    assert comp[0] < clas[0] and comp[1] < clas[1], f"{comp} vs {clas}"
    print(
        f"ACCEPTANCE 7 PASS: position indices composite ({comp[0]:.2f}, {comp[1]:.2f}) "
        f"< classical ({clas[0]:.2f}, {clas[1]:.2f}) per joint"
    )


def test_acceptance_08_energy_functional_decreases(scenario_a_composite):
    log = scenario_a_composite.log
    assert log.witness is not None
    t = log.t
    h = max(log.constants.h_m, log.constants.h_s)
    start = log.config.force.stop + h
    mask = t >= start
    V = log.V[mask]
    assert np.all(np.isfinite(V))
    viol = (np.diff(V) - 1e-3 * np.abs(V[:-1]) - 1e-12).max()
    assert viol <= 0.0
    print(
        f"ACCEPTANCE 8 PASS: V non-increasing after {start:.1f} s "
        f"(worst slack-adjusted step {viol:.2e})"
    )


def test_acceptance_09_wall_contact(scenario_b_composite):
    log = scenario_b_composite.log
    cfg = log.config
    t = log.t
    l1, l2 = cfg.slave.l1, cfg.slave.l2
    y_ee = l1 * np.sin(log.q_s[:, 0]) + l2 * np.sin(log.q_s[:, 0] + log.q_s[:, 1])
    # settled contact: the last two seconds before force release
    win = (t >= cfg.force.stop - 2.0) & (t <= cfg.force.stop)
    assert y_ee[win].min() >= 0.6
    assert y_ee[win].max() <= 0.61
    final_gap = np.abs(log.q_m[-1] - log.q_s[-1]).max()
    assert final_gap <= 0.02
    print(
        f"ACCEPTANCE 9 PASS: contact height in [{y_ee[win].min():.4f}, "
        f"{y_ee[win].max():.4f}] m, master-slave gap {final_gap:.4f} rad at "
        f"{t[-1]:.0f} s"
    )


def test_acceptance_10_determinism_and_refinement():
    cfg1 = default_config("A")
    cfg1.horizon = 1.5
    log1 = run_scenario(cfg1)
    cfg2 = default_config("A")
    cfg2.horizon = 1.5
    log2 = run_scenario(cfg2)
    assert np.array_equal(log1.data, log2.data), "repeated runs differ"

    cfg3 = default_config("A")
    cfg3.horizon = 6.0
    end_coarse = run_scenario(cfg3).q_m[-1].copy()
    cfg4 = default_config("A")
    cfg4.horizon = 6.0
    cfg4.dt = cfg3.dt / 2.0
    end_fine = run_scenario(cfg4).q_m[-1]
    diff = np.abs(end_coarse - end_fine).max()
    assert diff < 1e-3
    print(
        f"ACCEPTANCE 10 PASS: bit-identical repeat, dt-halving shift {diff:.2e} rad"
    )
