"""Coupled master/slave delay-differential simulation.

Integrates both manipulators, both adaptive controllers, the prediction
filters and the delayed channel with a fixed-step classical 4-stage
(4th-order) scheme. Delayed signals are read from ring-buffer histories by
linear interpolation at each stage time and held during the stage
evaluation; the forgetting rate mu is held at its step-start value across
the four stages. All state advances with the same step and scheme so the
coupled system stays consistent.

The inner loop works on plain Python floats (numpy per-call overhead on
2- and 5-dimensional operands would dominate the runtime); the model
formulas come from the shared scalar helpers in ``dynamics``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import DelayProfile, SignalHistory, delay_value, validate_profile
from .controller import ControllerState, GainConfig, InvariantBreach, forgetting_rate
from .stability import lmi_feasible, stability_constants
from .dynamics import (
    ManipulatorParams,
    coriolis_entries,
    gravity_entries,
    mass_entries,
    regressor_ctrl_rows,
    regressor_rows,
    theta_from_params,
)


class NumericalDivergence(Exception):
    """State norm exceeded the divergence bound (or became non-finite)."""


@dataclass(frozen=True)
class ForceProfile:
    """Rectangular operator force on the master, applied along +Y."""

    amplitude: float = 90.0  # [N]
    start: float = 2.0  # [s]
    stop: float = 8.5  # [s]


@dataclass(frozen=True)
class Wall:
    """Stiff penalty wall below which the slave end-effector moves freely."""

    y: float = 0.6  # wall position [m]
    stiffness: float = 0.0  # [N/m]; 0 disables contact


@dataclass
class ScenarioConfig:
    scenario: str = "A"  # A: free motion, B: wall contact
    mode: str = "composite"  # composite | classical
    prediction: str = "accel"  # accel | filtered
    dt: float = 1e-4
    horizon: float = 20.0
    force: ForceProfile = field(default_factory=ForceProfile)
    force_scale: float = 1.0
    wall: Wall = field(default_factory=Wall)
    metrics_eps: float = 1e-6
    master: ManipulatorParams = None
    slave: ManipulatorParams = None
    gains_m: GainConfig = None
    gains_s: GainConfig = None
    delay_m: DelayProfile = None
    delay_s: DelayProfile = None
    theta0_m: np.ndarray = None
    theta0_s: np.ndarray = None

    def validate(self):
        if self.scenario not in ("A", "B"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.mode not in ("composite", "classical"):
            raise ValueError(f"unknown controller mode {self.mode!r}")
        if self.prediction not in ("filtered", "accel"):
            raise ValueError(f"unknown prediction mode {self.prediction!r}")
        if not self.dt > 0.0:
            raise ValueError("dt must be > 0")
        if self.horizon < 0.0:
            raise ValueError("horizon must be >= 0")
        if self.wall.stiffness < 0.0:
            raise ValueError("wall stiffness must be >= 0")
        if self.force_scale < 0.0:
            raise ValueError("force_scale must be >= 0")
        self.master.validate()
        self.slave.validate()
        self.gains_m.validate()
        self.gains_s.validate()
        validate_profile(self.delay_m)
        validate_profile(self.delay_s)
        for th0 in (self.theta0_m, self.theta0_s):
            if np.asarray(th0, dtype=float).shape != (5,):
                raise ValueError("initial estimates must have dimension 5")


def default_master_params() -> ManipulatorParams:
    return ManipulatorParams(m1=1.5, m2=0.75, l1=0.5, l2=0.3)


def default_slave_params() -> ManipulatorParams:
    return ManipulatorParams(m1=2.5, m2=1.5, l1=0.5, l2=0.3)


def default_delay_master() -> DelayProfile:
    return DelayProfile(base=0.3, sinusoids=((0.2, 2.0), (0.1, 5.0)))


def default_delay_slave() -> DelayProfile:
    return DelayProfile(base=0.8, sinusoids=((0.3, 1.5), (0.1, 5.0)))


THETA0_MASTER = (0.4, 0.1, 0.2, 0.32, 0.7)
THETA0_SLAVE = (0.7, 0.2, 0.3, 0.5, 1.7)


def default_gains_master() -> GainConfig:
    """Tuned adaptation setup: the inertia components (1-3) get a larger
    diagonal gain than the well-excited gravity components, and P starts
    small so the auxiliary variable z = 0 matches P * (initial error)
    closely."""
    return GainConfig.from_scalars(
        k=100.0,
        lam=0.5,
        gamma=(10.0, 10.0, 10.0, 1.0, 1.0),
        delta=2.0,
        alpha_gain=1e-4,
        kappa0=0.005,
        mu0=1.0,
        alpha_filter=100.0,
        p0=0.01,
    )


def default_gains_slave() -> GainConfig:
    """Slave-side adaptation; stronger than the master's because the slave
    only sees the operator events through the delayed channel."""
    return GainConfig.from_scalars(
        k=100.0,
        lam=0.5,
        gamma=(30.0, 30.0, 30.0, 1.0, 1.0),
        delta=4.0,
        alpha_gain=1e-4,
        kappa0=0.003,
        mu0=1.0,
        alpha_filter=100.0,
        p0=0.006,
    )


def default_config(scenario: str = "A", mode: str = "composite") -> ScenarioConfig:
    """Reference setup: two-arm teleoperator with the published masses,
    lengths, delays, control gains and initial estimates.

    The free-motion force pulse is strong and short so the posture drifts
    and the delayed-read wobble excites all parameter directions before
    the synchronization window; the wall scenario keeps a gentler push
    held through the contact phase.
    """
    if scenario == "B":
        force = ForceProfile(amplitude=30.0, start=2.0, stop=15.0)
        wall = Wall(y=0.6, stiffness=1e4)
        horizon = 25.0
    else:
        force = ForceProfile(amplitude=90.0, start=2.0, stop=8.5)
        wall = Wall(y=0.6, stiffness=0.0)
        horizon = 20.0
    return ScenarioConfig(
        scenario=scenario,
        mode=mode,
        horizon=horizon,
        force=force,
        wall=wall,
        master=default_master_params(),
        slave=default_slave_params(),
        gains_m=default_gains_master(),
        gains_s=default_gains_slave(),
        delay_m=default_delay_master(),
        delay_s=default_delay_slave(),
        theta0_m=np.array(THETA0_MASTER),
        theta0_s=np.array(THETA0_SLAVE),
    )


def human_force(profile: ForceProfile, t: float) -> np.ndarray:
    """Task-space operator force (0, A) inside [start, stop), else zero."""
    if profile.start <= t < profile.stop:
        return np.array([0.0, profile.amplitude])
    return np.zeros(2)


def environment_force(p_slave: ManipulatorParams, q_s, wall: Wall) -> np.ndarray:
    """Task-space wall reaction on the slave end-effector.

    Pushes back along -Y with stiffness * penetration once the
    end-effector is above the wall plane; zero otherwise.
    """
    if wall.stiffness <= 0.0:
        return np.zeros(2)
    y = p_slave.l1 * math.sin(q_s[0]) + p_slave.l2 * math.sin(q_s[0] + q_s[1])
    if y > wall.y:
        return np.array([0.0, -wall.stiffness * (y - wall.y)])
    return np.zeros(2)


# ---------------------------------------------------------------------------
# trajectory log
# ---------------------------------------------------------------------------

COLUMNS = (
    ["t"]
    + ["q_m1", "q_m2", "q_s1", "q_s2", "qd_m1", "qd_m2", "qd_s1", "qd_s2"]
    + [f"th_m{i}" for i in range(1, 6)]
    + [f"th_s{i}" for i in range(1, 6)]
    + ["tau_m1", "tau_m2", "tau_s1", "tau_s2"]
    + ["F_m1", "F_m2", "F_s1", "F_s2"]
    + ["dp_1", "dp_2", "df_1", "df_2"]
    + ["V", "mu_m", "mu_s", "lmin_P_m", "lmin_P_s"]
)
_C = {name: i for i, name in enumerate(COLUMNS)}
COL_V = _C["V"]


@dataclass
class TrajectoryLog:
    """Uniformly sampled run record; ``data`` columns follow COLUMNS."""

    data: np.ndarray  # (n_records, len(COLUMNS))
    zeta_m: np.ndarray  # ||z - P (theta - theta_hat)|| per record (diagnostic)
    zeta_s: np.ndarray
    dp_index: np.ndarray  # accumulated integral of |delta_p| per joint
    df_index: np.ndarray
    config: ScenarioConfig = None
    theta_true_m: np.ndarray = None
    theta_true_s: np.ndarray = None
    constants: object = None  # StabilityConstants used for the V column
    witness: object = None  # LmiWitness used for the V column (None if infeasible)

    @property
    def t(self):
        return self.data[:, 0]

    def col(self, name: str):
        return self.data[:, _C[name]]

    def block(self, prefix: str, n: int):
        i = _C[f"{prefix}1"]
        return self.data[:, i : i + n]

    @property
    def q_m(self):
        return self.block("q_m", 2)

    @property
    def q_s(self):
        return self.block("q_s", 2)

    @property
    def qd_m(self):
        return self.block("qd_m", 2)

    @property
    def qd_s(self):
        return self.block("qd_s", 2)

    @property
    def theta_m(self):
        return self.block("th_m", 5)

    @property
    def theta_s(self):
        return self.block("th_s", 5)

    @property
    def V(self):
        return self.data[:, COL_V]


# ---------------------------------------------------------------------------
# public stepping state
# ---------------------------------------------------------------------------


@dataclass
class SimState:
    q_m: np.ndarray
    qd_m: np.ndarray
    q_s: np.ndarray
    qd_s: np.ndarray
    ctrl_m: ControllerState
    ctrl_s: ControllerState
    hist_q_m: SignalHistory
    hist_qd_m: SignalHistory
    hist_q_s: SignalHistory
    hist_qd_s: SignalHistory
    hist_F_s: SignalHistory


def make_initial_state(cfg: ScenarioConfig) -> SimState:
    """Rest start: channels hold the initial values as constant pre-history."""
    h_m = cfg.delay_m.base + sum(abs(a) for a, _ in cfg.delay_m.sinusoids)
    h_s = cfg.delay_s.base + sum(abs(a) for a, _ in cfg.delay_s.sinusoids)
    span_m = h_m + 4.0 * cfg.dt
    span_s = h_s + 4.0 * cfg.dt
    q0 = np.zeros(2)
    F_s0 = environment_force(cfg.slave, q0, cfg.wall)
    Fj0 = _jacobian_transpose_y(cfg.slave, 0.0, 0.0) * F_s0[1]
    return SimState(
        q_m=q0.copy(),
        qd_m=q0.copy(),
        q_s=q0.copy(),
        qd_s=q0.copy(),
        ctrl_m=ControllerState.initial(cfg.theta0_m, cfg.gains_m),
        ctrl_s=ControllerState.initial(cfg.theta0_s, cfg.gains_s),
        hist_q_m=SignalHistory(cfg.dt, q0, span_m),
        hist_qd_m=SignalHistory(cfg.dt, q0, span_m),
        hist_q_s=SignalHistory(cfg.dt, q0, span_s),
        hist_qd_s=SignalHistory(cfg.dt, q0, span_s),
        hist_F_s=SignalHistory(cfg.dt, Fj0, span_s),
    )


def _jacobian_transpose_y(p: ManipulatorParams, q1: float, q2: float) -> np.ndarray:
    """Column of J^T mapping a pure-Y task force to joint torques."""
    c1 = math.cos(q1)
    c12 = math.cos(q1 + q2)
    return np.array([p.l1 * c1 + p.l2 * c12, p.l2 * c12])


# ---------------------------------------------------------------------------
# inner loop
# ---------------------------------------------------------------------------

# flat per-robot state layout: q(2) qd(2) theta_hat(5) z(5) P(25) fy(2) fY(10)
_I_TH = 4
_I_Z = 9
_I_P = 14
_I_FY = 39
_I_FYM = 41


def _pack(q, qd, cs: ControllerState):
    y = [float(q[0]), float(q[1]), float(qd[0]), float(qd[1])]
    y += [float(v) for v in cs.theta_hat]
    y += [float(v) for v in cs.z]
    y += [float(v) for v in cs.P.flat]
    y += [float(v) for v in cs.filt_y]
    y += [float(v) for v in cs.filt_Y.flat]
    return y


def _unpack(y, gains: GainConfig) -> tuple:
    q = np.array(y[0:2])
    qd = np.array(y[2:4])
    P = np.array(y[_I_P : _I_P + 25]).reshape(5, 5)
    cs = ControllerState(
        theta_hat=np.array(y[_I_TH : _I_TH + 5]),
        z=np.array(y[_I_Z : _I_Z + 5]),
        P=P,
        mu=forgetting_rate(P, gains),
        filt_y=np.array(y[_I_FY : _I_FY + 2]),
        filt_Y=np.array(y[_I_FYM : _I_FYM + 10]).reshape(2, 5),
    )
    return q, qd, cs


def _make_rates(p: ManipulatorParams, gains: GainConfig, cfg: ScenarioConfig, is_master: bool):
    """Bind all constants of one robot into a stage-rate closure.

    rates(y, t, qo1, qo2, qdo1, qdo2, mu) -> (dy, tau1, tau2, F1, F2)
    where (qo, qdo) are the delayed peer signals held for the stage.
    """
    tt = tuple(float(v) for v in theta_from_params(p))
    g = p.g
    l1, l2 = p.l1, p.l2
    K = gains.K
    k11, k12, k21, k22 = float(K[0, 0]), float(K[0, 1]), float(K[1, 0]), float(K[1, 1])
    lam = gains.lam
    delta = gains.delta
    ag = gains.alpha_gain
    k0 = gains.kappa0
    af = gains.alpha_filter
    Gam = gains.Gamma
    gam_scalar = None
    if np.allclose(Gam, Gam[0, 0] * np.eye(5), atol=0.0):
        gam_scalar = float(Gam[0, 0])
    Gflat = tuple(float(v) for v in Gam.flat)
    classical = cfg.mode == "classical"
    filtered = cfg.prediction == "filtered"
    amp = cfg.force.amplitude * cfg.force_scale
    f_start, f_stop = cfg.force.start, cfg.force.stop
    wall_y, wall_k = cfg.wall.y, cfg.wall.stiffness
    cos, sin, sqrt = math.cos, math.sin, math.sqrt
    r5 = range(5)

    def rates(y, t, qo1, qo2, qdo1, qdo2, mu):
        q1 = y[0]
        q2 = y[1]
        qd1 = y[2]
        qd2 = y[3]
        e1 = q1 - qo1
        e2 = q2 - qo2
        eta1 = qd1 + lam * e1
        eta2 = qd2 + lam * e2
        s1 = sin(q1)
        c1 = cos(q1)
        s2 = sin(q2)
        c2 = cos(q2)
        q12 = q1 + q2
        s12 = sin(q12)
        c12 = cos(q12)
        m11, m12, m22 = mass_entries(tt, c2)
        c11, c12m, c21 = coriolis_entries(tt, s2, qd1, qd2)
        g1, g2 = gravity_entries(tt, g, c1, c12)
        u1 = lam * (qd1 - qdo1)
        u2 = lam * (qd2 - qdo2)
        w1 = lam * e1
        w2 = lam * e2
        r1, r2 = regressor_ctrl_rows(c1, c12, s2, c2, qd1, qd2, u1, u2, w1, w2, g)
        th0 = y[4]
        th1 = y[5]
        th2 = y[6]
        th3 = y[7]
        th4 = y[8]
        tau1 = -(r1[0] * th0 + r1[1] * th1 + r1[2] * th2 + r1[3] * th3 + r1[4] * th4) - (
            k11 * eta1 + k12 * eta2
        )
        tau2 = -(r2[0] * th0 + r2[1] * th1 + r2[2] * th2 + r2[3] * th3 + r2[4] * th4) - (
            k21 * eta1 + k22 * eta2
        )
        if is_master:
            Fy = amp if f_start <= t < f_stop else 0.0
        elif wall_k > 0.0:
            yee = l1 * s1 + l2 * s12
            Fy = -wall_k * (yee - wall_y) if yee > wall_y else 0.0
        else:
            Fy = 0.0
        jt1 = l1 * c1 + l2 * c12
        jt2 = l2 * c12
        F1 = jt1 * Fy
        F2 = jt2 * Fy
        rhs1 = F1 + tau1 - (c11 * qd1 + c12m * qd2) - g1
        rhs2 = F2 + tau2 - c21 * qd1 - g2
        det = m11 * m22 - m12 * m12
        a1 = (m22 * rhs1 - m12 * rhs2) / det
        a2 = (m11 * rhs2 - m12 * rhs1) / det

        v0 = r1[0] * eta1 + r2[0] * eta2
        v1 = r1[1] * eta1 + r2[1] * eta2
        v2 = r1[2] * eta1 + r2[2] * eta2
        v3 = r1[3] * eta1 + r2[3] * eta2
        v4 = r1[4] * eta1 + r2[4] * eta2

        if classical:
            if gam_scalar is not None:
                dth = [gam_scalar * v0, gam_scalar * v1, gam_scalar * v2, gam_scalar * v3, gam_scalar * v4]
            else:
                vv = (v0, v1, v2, v3, v4)
                dth = [sum(Gflat[5 * j + l] * vv[l] for l in r5) for j in r5]
            dy = [qd1, qd2, a1, a2] + dth + [0.0] * 42
            return dy, tau1, tau2, F1, F2

        A, B = regressor_rows(c1, c12, s2, c2, qd1, qd2, a1, a2, g)
        yF1 = tau1 + F1
        yF2 = tau2 + F2
        if filtered:
            fy0 = y[39]
            fy1 = y[40]
            Yp1 = y[41:46]
            Yp2 = y[46:51]
            dfy = [af * (yF1 - fy0), af * (yF2 - fy1)]
            dfY = [af * (A[j] - Yp1[j]) for j in r5] + [af * (B[j] - Yp2[j]) for j in r5]
            ep1 = fy0 - (Yp1[0] * th0 + Yp1[1] * th1 + Yp1[2] * th2 + Yp1[3] * th3 + Yp1[4] * th4)
            ep2 = fy1 - (Yp2[0] * th0 + Yp2[1] * th1 + Yp2[2] * th2 + Yp2[3] * th3 + Yp2[4] * th4)
        else:
            Yp1, Yp2 = A, B
            dfy = [0.0, 0.0]
            dfY = [0.0] * 10
            ep1 = yF1 - (A[0] * th0 + A[1] * th1 + A[2] * th2 + A[3] * th3 + A[4] * th4)
            ep2 = yF2 - (B[0] * th0 + B[1] * th1 + B[2] * th2 + B[3] * th3 + B[4] * th4)

        xi = ag * sqrt(v0 * v0 + v1 * v1 + v2 * v2 + v3 * v3 + v4 * v4) / k0
        wz = xi + delta
        z0 = y[9]
        z1 = y[10]
        z2 = y[11]
        z3 = y[12]
        z4 = y[13]
        s0 = v0 + wz * z0
        s1_ = v1 + wz * z1
        s2_ = v2 + wz * z2
        s3_ = v3 + wz * z3
        s4_ = v4 + wz * z4
        if gam_scalar is not None:
            d0 = gam_scalar * s0
            d1 = gam_scalar * s1_
            d2 = gam_scalar * s2_
            d3 = gam_scalar * s3_
            d4 = gam_scalar * s4_
        else:
            ss = (s0, s1_, s2_, s3_, s4_)
            d0, d1, d2, d3, d4 = (sum(Gflat[5 * j + l] * ss[l] for l in r5) for j in r5)
        A0, A1, A2, A3, A4 = Yp1
        B0, B1, B2, B3, B4 = Yp2
        # products of the prediction-regressor outer product (symmetric)
        p00 = A0 * A0 + B0 * B0
        p01 = A0 * A1 + B0 * B1
        p02 = A0 * A2 + B0 * B2
        p03 = A0 * A3 + B0 * B3
        p04 = A0 * A4 + B0 * B4
        p11 = A1 * A1 + B1 * B1
        p12 = A1 * A2 + B1 * B2
        p13 = A1 * A3 + B1 * B3
        p14 = A1 * A4 + B1 * B4
        p22 = A2 * A2 + B2 * B2
        p23 = A2 * A3 + B2 * B3
        p24 = A2 * A4 + B2 * B4
        p33 = A3 * A3 + B3 * B3
        p34 = A3 * A4 + B3 * B4
        p44 = A4 * A4 + B4 * B4
        dy = [
            qd1,
            qd2,
            a1,
            a2,
            d0,
            d1,
            d2,
            d3,
            d4,
            -mu * z0 + A0 * ep1 + B0 * ep2
            - (y[14] * d0 + y[15] * d1 + y[16] * d2 + y[17] * d3 + y[18] * d4),
            -mu * z1 + A1 * ep1 + B1 * ep2
            - (y[19] * d0 + y[20] * d1 + y[21] * d2 + y[22] * d3 + y[23] * d4),
            -mu * z2 + A2 * ep1 + B2 * ep2
            - (y[24] * d0 + y[25] * d1 + y[26] * d2 + y[27] * d3 + y[28] * d4),
            -mu * z3 + A3 * ep1 + B3 * ep2
            - (y[29] * d0 + y[30] * d1 + y[31] * d2 + y[32] * d3 + y[33] * d4),
            -mu * z4 + A4 * ep1 + B4 * ep2
            - (y[34] * d0 + y[35] * d1 + y[36] * d2 + y[37] * d3 + y[38] * d4),
            p00 - mu * y[14],
            p01 - mu * y[15],
            p02 - mu * y[16],
            p03 - mu * y[17],
            p04 - mu * y[18],
            p01 - mu * y[19],
            p11 - mu * y[20],
            p12 - mu * y[21],
            p13 - mu * y[22],
            p14 - mu * y[23],
            p02 - mu * y[24],
            p12 - mu * y[25],
            p22 - mu * y[26],
            p23 - mu * y[27],
            p24 - mu * y[28],
            p03 - mu * y[29],
            p13 - mu * y[30],
            p23 - mu * y[31],
            p33 - mu * y[32],
            p34 - mu * y[33],
            p04 - mu * y[34],
            p14 - mu * y[35],
            p24 - mu * y[36],
            p34 - mu * y[37],
            p44 - mu * y[38],
            dfy[0],
            dfy[1],
            dfY[0],
            dfY[1],
            dfY[2],
            dfY[3],
            dfY[4],
            dfY[5],
            dfY[6],
            dfY[7],
            dfY[8],
            dfY[9],
        ]
        return dy, tau1, tau2, F1, F2

    return rates


class _Engine:
    """Per-run constants: rate closures, delay profiles, channel bookkeeping."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rates_m = _make_rates(cfg.master, cfg.gains_m, cfg, is_master=True)
        self.rates_s = _make_rates(cfg.slave, cfg.gains_s, cfg, is_master=False)
        self.theta_true_m = tuple(float(v) for v in theta_from_params(cfg.master))
        self.theta_true_s = tuple(float(v) for v in theta_from_params(cfg.slave))

    def reads(self, st: SimState, t: float):
        """Delayed peer signals for (master, slave) controllers at time t.

        Read times are clamped to the newest stored sample so stage times
        slightly ahead of the histories stay well-defined when T < dt.
        """
        cfg = self.cfg
        latest = st.hist_q_m.latest_time
        tr_s = t - delay_value(cfg.delay_s, t)  # slave -> master channel
        tr_m = t - delay_value(cfg.delay_m, t)  # master -> slave channel
        if tr_s > latest:
            tr_s = latest
        if tr_m > latest:
            tr_m = latest
        qs0, qs1 = st.hist_q_s.sample(tr_s)
        qds0, qds1 = st.hist_qd_s.sample(tr_s)
        qm0, qm1 = st.hist_q_m.sample(tr_m)
        qdm0, qdm1 = st.hist_qd_m.sample(tr_m)
        return (qs0, qs1, qds0, qds1), (qm0, qm1, qdm0, qdm1), tr_m, tr_s

    def advance(self, y_m, y_s, t, dt, st: SimState, mu_m, mu_s, k1m, k1s):
        """One 4-stage step from t given precomputed first-stage rates."""
        half = 0.5 * dt
        reads_mid_m, reads_mid_s, _, _ = self.reads(st, t + half)
        reads_end_m, reads_end_s, _, _ = self.reads(st, t + dt)
        rm, rs = self.rates_m, self.rates_s

        y2m = [a + half * b for a, b in zip(y_m, k1m)]
        y2s = [a + half * b for a, b in zip(y_s, k1s)]
        k2m, *_ = rm(y2m, t + half, *reads_mid_m, mu_m)
        k2s, *_ = rs(y2s, t + half, *reads_mid_s, mu_s)

        y3m = [a + half * b for a, b in zip(y_m, k2m)]
        y3s = [a + half * b for a, b in zip(y_s, k2s)]
        k3m, *_ = rm(y3m, t + half, *reads_mid_m, mu_m)
        k3s, *_ = rs(y3s, t + half, *reads_mid_s, mu_s)

        y4m = [a + dt * b for a, b in zip(y_m, k3m)]
        y4s = [a + dt * b for a, b in zip(y_s, k3s)]
        k4m, *_ = rm(y4m, t + dt, *reads_end_m, mu_m)
        k4s, *_ = rs(y4s, t + dt, *reads_end_s, mu_s)

        sixth = dt / 6.0
        new_m = [
            a + sixth * (b1 + 2.0 * (b2 + b3) + b4)
            for a, b1, b2, b3, b4 in zip(y_m, k1m, k2m, k3m, k4m)
        ]
        new_s = [
            a + sixth * (b1 + 2.0 * (b2 + b3) + b4)
            for a, b1, b2, b3, b4 in zip(y_s, k1s, k2s, k3s, k4s)
        ]
        return new_m, new_s

    def finalize(self, y_m, y_s, t_new):
        """Re-symmetrize P, enforce invariants and the divergence bound.

        Returns (lam_min_m, lam_min_s, mu_m, mu_s) at the new state.
        """
        cfg = self.cfg
        norm_m = float(np.abs(np.asarray(y_m)).max())
        norm_s = float(np.abs(np.asarray(y_s)).max())
        # NaN fails the comparison too, so non-finite states land here
        if not (norm_m < 1e6 and norm_s < 1e6):
            raise NumericalDivergence(
                f"state norm {max(norm_m, norm_s)} at t = {t_new:.6f} s "
                "(instability or too-large dt)"
            )
        for y in (y_m, y_s):
            base = _I_P
            for r in range(5):
                for c in range(r + 1, 5):
                    i = base + 5 * r + c
                    j = base + 5 * c + r
                    avg = 0.5 * (y[i] + y[j])
                    y[i] = avg
                    y[j] = avg
        P2 = np.array([y_m[_I_P : _I_P + 25], y_s[_I_P : _I_P + 25]]).reshape(2, 5, 5)
        eigs = np.linalg.eigvalsh(P2)
        lmin_m = float(eigs[0, 0])
        lmin_s = float(eigs[1, 0])
        if cfg.mode == "composite":
            if lmin_m < cfg.gains_m.kappa0 - 1e-6 or lmin_s < cfg.gains_s.kappa0 - 1e-6:
                raise InvariantBreach(
                    f"P floor violated at t = {t_new:.6f} s "
                    f"(lambda_min = {min(lmin_m, lmin_s)}); step size too large"
                )
        mu_m = max(0.0, cfg.gains_m.mu0 * (1.0 - cfg.gains_m.kappa0 / lmin_m))
        mu_s = max(0.0, cfg.gains_s.mu0 * (1.0 - cfg.gains_s.kappa0 / lmin_s))
        return lmin_m, lmin_s, mu_m, mu_s

    def slave_ext_force(self, y_s):
        """Joint-space wall torque at the current slave state (for the log/channel)."""
        cfg = self.cfg
        if cfg.wall.stiffness <= 0.0:
            return 0.0, 0.0
        q1, q2 = y_s[0], y_s[1]
        l1, l2 = cfg.slave.l1, cfg.slave.l2
        yee = l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
        if yee <= cfg.wall.y:
            return 0.0, 0.0
        Fy = -cfg.wall.stiffness * (yee - cfg.wall.y)
        c1 = math.cos(q1)
        c12 = math.cos(q1 + q2)
        return (l1 * c1 + l2 * c12) * Fy, l2 * c12 * Fy


def sim_step(state: SimState, t: float, dt: float, cfg: ScenarioConfig) -> SimState:
    """Advance the full coupled state by one step (histories included)."""
    if abs(state.hist_q_m.latest_time - t) > 1e-9:
        raise ValueError("state histories are not aligned with t")
    eng = _Engine(cfg)
    y_m = _pack(state.q_m, state.qd_m, state.ctrl_m)
    y_s = _pack(state.q_s, state.qd_s, state.ctrl_s)
    mu_m = state.ctrl_m.mu
    mu_s = state.ctrl_s.mu
    reads_m, reads_s, _, _ = eng.reads(state, t)
    k1m, *_ = eng.rates_m(y_m, t, *reads_m, mu_m)
    k1s, *_ = eng.rates_s(y_s, t, *reads_s, mu_s)
    y_m, y_s = eng.advance(y_m, y_s, t, dt, state, mu_m, mu_s, k1m, k1s)
    eng.finalize(y_m, y_s, t + dt)
    q_m, qd_m, ctrl_m = _unpack(y_m, cfg.gains_m)
    q_s, qd_s, ctrl_s = _unpack(y_s, cfg.gains_s)
    state.hist_q_m.append(q_m)
    state.hist_qd_m.append(qd_m)
    state.hist_q_s.append(q_s)
    state.hist_qd_s.append(qd_s)
    state.hist_F_s.append(eng.slave_ext_force(y_s))
    return replace(
        state, q_m=q_m, qd_m=qd_m, q_s=q_s, qd_s=qd_s, ctrl_m=ctrl_m, ctrl_s=ctrl_s
    )


def _zeta_norm(y, theta_true):
    """||z - P (theta_true - theta_hat)|| from a flat robot state."""
    t0 = theta_true[0] - y[4]
    t1 = theta_true[1] - y[5]
    t2 = theta_true[2] - y[6]
    t3 = theta_true[3] - y[7]
    t4 = theta_true[4] - y[8]
    acc = 0.0
    for j in range(5):
        b = _I_P + 5 * j
        pt = y[b] * t0 + y[b + 1] * t1 + y[b + 2] * t2 + y[b + 3] * t3 + y[b + 4] * t4
        r = y[_I_Z + j] - pt
        acc += r * r
    return math.sqrt(acc)


def run_scenario(cfg: ScenarioConfig) -> TrajectoryLog:
    """Integrate the scenario from rest and log every step.

    Raises NumericalDivergence / InvariantBreach with the failing
    timestamp; the V column is filled from the certificate witness when
    one exists (NaN otherwise).
    """
    cfg.validate()
    eng = _Engine(cfg)
    st = make_initial_state(cfg)
    dt = cfg.dt
    n = int(round(cfg.horizon / dt))
    ncol = len(COLUMNS)
    data = np.empty((n + 1, ncol))
    zeta_m = np.empty(n + 1)
    zeta_s = np.empty(n + 1)
    eps = cfg.metrics_eps
    # scalar trapezoidal accumulation of the tracking indices (same update
    # rule as metrics.accumulate, kept inline for loop speed)
    jp1 = jp2 = jf1 = jf2 = 0.0
    prev_dp1 = prev_dp2 = prev_df1 = prev_df2 = 0.0
    half_dt = 0.5 * dt

    y_m = _pack(st.q_m, st.qd_m, st.ctrl_m)
    y_s = _pack(st.q_s, st.qd_s, st.ctrl_s)
    mu_m = st.ctrl_m.mu
    mu_s = st.ctrl_s.mu
    lmin_m = cfg.gains_m.p0
    lmin_s = cfg.gains_s.p0
    tt_m = eng.theta_true_m
    tt_s = eng.theta_true_s

    for k in range(n + 1):
        t = k * dt
        reads_m, reads_s, tr_m, tr_s = eng.reads(st, t)
        k1m, tau_m1, tau_m2, Fm1, Fm2 = eng.rates_m(y_m, t, *reads_m, mu_m)
        k1s, tau_s1, tau_s2, Fs1, Fs2 = eng.rates_s(y_s, t, *reads_s, mu_s)

        # tracking ratios: delayed master position vs slave, current master
        # force vs delayed slave force
        qm_d0, qm_d1 = reads_s[0], reads_s[1]
        dp1 = abs(qm_d0 - y_s[0]) / abs(qm_d0) if abs(qm_d0) > eps else 0.0
        dp2 = abs(qm_d1 - y_s[1]) / abs(qm_d1) if abs(qm_d1) > eps else 0.0
        Fsd0, Fsd1 = st.hist_F_s.sample(min(tr_s, st.hist_F_s.latest_time))
        df1 = abs(Fm1 - Fsd0) / abs(Fsd0) if abs(Fsd0) > eps else 0.0
        df2 = abs(Fm2 - Fsd1) / abs(Fsd1) if abs(Fsd1) > eps else 0.0

        row = [t]
        row += [y_m[0], y_m[1], y_s[0], y_s[1], y_m[2], y_m[3], y_s[2], y_s[3]]
        row += y_m[_I_TH : _I_TH + 5]
        row += y_s[_I_TH : _I_TH + 5]
        row += [tau_m1, tau_m2, tau_s1, tau_s2, Fm1, Fm2, Fs1, Fs2]
        row += [dp1, dp2, df1, df2, math.nan, mu_m, mu_s, lmin_m, lmin_s]
        data[k] = row
        zeta_m[k] = _zeta_norm(y_m, tt_m)
        zeta_s[k] = _zeta_norm(y_s, tt_s)
        if k > 0:
            jp1 += half_dt * (dp1 + prev_dp1)
            jp2 += half_dt * (dp2 + prev_dp2)
            jf1 += half_dt * (df1 + prev_df1)
            jf2 += half_dt * (df2 + prev_df2)
        prev_dp1, prev_dp2, prev_df1, prev_df2 = dp1, dp2, df1, df2

        if k == n:
            break
        y_m, y_s = eng.advance(y_m, y_s, t, dt, st, mu_m, mu_s, k1m, k1s)
        lmin_m, lmin_s, mu_m, mu_s = eng.finalize(y_m, y_s, t + dt)
        st.hist_q_m.append(y_m[0:2])
        st.hist_qd_m.append(y_m[2:4])
        st.hist_q_s.append(y_s[0:2])
        st.hist_qd_s.append(y_s[2:4])
        st.hist_F_s.append(eng.slave_ext_force(y_s))

    log = TrajectoryLog(
        data=data,
        zeta_m=zeta_m,
        zeta_s=zeta_s,
        dp_index=np.array([jp1, jp2]),
        df_index=np.array([jf1, jf2]),
        config=cfg,
        theta_true_m=np.array(tt_m),
        theta_true_s=np.array(tt_s),
    )
    _attach_lyapunov(log)
    return log


def _attach_lyapunov(log: TrajectoryLog):
    """Fill the V column from the certificate witness (NaN when infeasible)."""
    cfg = log.config
    consts = stability_constants(
        cfg.master, cfg.slave, cfg.gains_m, cfg.gains_s, cfg.delay_m, cfg.delay_s
    )
    witness = lmi_feasible(consts)
    log.constants = consts
    log.witness = witness
    if witness is None:
        log.data[:, COL_V] = math.nan
        return
    log.data[:, COL_V] = _lyapunov_series(log, consts, witness)


def _cumtrap(t, f):
    out = np.empty_like(f)
    out[0] = 0.0
    np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t), out=out[1:])
    return out


def _lyapunov_series(log: TrajectoryLog, consts, witness) -> np.ndarray:
    """Energy-like functional along the log (zero pre-history before t[0]).

    V = weighted controller energies + squared position mismatch
      + delay-window integrals of the joint velocities.
    """
    cfg = log.config
    t = log.t
    V = np.zeros(len(t))

    sides = (
        ("m", cfg.master, cfg.gains_m, log.theta_true_m, log.q_m, log.qd_m,
         log.theta_m, log.q_s, cfg.delay_s, consts.k_m, consts.h_m, consts.nu_m,
         cfg.delay_m, witness.r_m),
        ("s", cfg.slave, cfg.gains_s, log.theta_true_s, log.q_s, log.qd_s,
         log.theta_s, log.q_m, cfg.delay_m, consts.k_s, consts.h_s, consts.nu_s,
         cfg.delay_s, witness.r_s),
    )
    for (_, params, gains, th_true, q, qd, th_hat, q_peer, peer_delay, k_i, h_i,
         nu_i, own_delay, r_i) in sides:
        # eta uses the peer position delayed through the peer's channel
        T_peer = np.full_like(t, peer_delay.base)
        for a, w in peer_delay.sinusoids:
            T_peer += a * np.sin(w * t)
        tq = t - T_peer
        q_del = np.column_stack(
            [np.interp(tq, t, q_peer[:, j], left=q_peer[0, j]) for j in range(2)]
        )
        e = q - q_del
        eta = qd + gains.lam * e
        th_vec = theta_from_params(params)
        c2 = np.cos(q[:, 1])
        m11 = th_vec[0] + 2.0 * th_vec[1] * c2
        m12 = th_vec[2] + th_vec[1] * c2
        m22 = th_vec[2]
        quad_eta = 0.5 * (
            m11 * eta[:, 0] ** 2 + 2.0 * m12 * eta[:, 0] * eta[:, 1] + m22 * eta[:, 1] ** 2
        )
        err = th_true[None, :] - th_hat
        Ginv = np.linalg.inv(gains.Gamma)
        quad_th = 0.5 * np.einsum("ij,jk,ik->i", err, Ginv, err)
        V += (2.0 / (k_i * gains.lam)) * (quad_eta + quad_th)

        speed2 = qd[:, 0] ** 2 + qd[:, 1] ** 2
        C = _cumtrap(t, speed2)
        S = _cumtrap(t, t * speed2)
        C_h = np.interp(t - h_i, t, C, left=0.0)
        S_h = np.interp(t - h_i, t, S, left=0.0)
        V += r_i * ((h_i - t) * (C - C_h) + (S - S_h))

        T_own = np.full_like(t, own_delay.base)
        for a, w in own_delay.sinusoids:
            T_own += a * np.sin(w * t)
        C_T = np.interp(t - T_own, t, C, left=0.0)
        V += nu_i * (C - C_T)

    V += np.sum((log.q_m - log.q_s) ** 2, axis=1)
    return V


def lyapunov_diagnostic(log: TrajectoryLog, constants, witness):
    """(times, V) along the log for a feasible witness.

    A log starting at the run origin (t[0] == 0, rest start) is evaluated
    over its whole span; a windowed log must cover more than the maximum
    delay and V is reported from t[0] + h onward.
    """
    if witness is None:
        raise ValueError("a feasible witness is required")
    h = max(constants.h_m, constants.h_s)
    t = log.t
    V = _lyapunov_series(log, constants, witness)
    if t[0] == 0.0:
        return t, V
    if t[-1] - t[0] < h:
        raise ValueError("log history is shorter than the maximum delay")
    mask = t >= t[0] + h
    return t[mask], V[mask]
