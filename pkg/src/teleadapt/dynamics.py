"""Two-link planar manipulator model: inertia/Coriolis/gravity terms, Jacobian,
and the linear-in-parameters regressor forms used by the adaptive controller.

The model is parameterized by a 5-vector theta:

    theta = (l2^2 m2 + l1^2 (m1 + m2),  l1 l2 m2,  l2^2 m2,  l2 m2,  l1 (m1 + m2))

so that M(q) qdd + C(q, qd) qd + G(q) == Y(q, qd, qdd) @ theta for all states.
Point masses sit at the link ends; gravity acts along -y.

The *_entries helpers work on plain floats (theta-form) and are shared with the
simulator's inner loop; the public functions wrap them in numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ManipulatorParams:
    """Physical constants of one arm. All fields must be strictly positive
    for a physically valid robot (a zero mass/length degenerates the
    inertia matrix)."""

    m1: float  # link-1 mass [kg]
    m2: float  # link-2 mass [kg]
    l1: float  # link-1 length [m]
    l2: float  # link-2 length [m]
    g: float = 9.81  # gravitational acceleration [m/s^2]

    def validate(self):
        for name in ("m1", "m2", "l1", "l2", "g"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"manipulator parameter {name} must be > 0")


@dataclass
class JointState:
    q: np.ndarray  # joint positions [rad], shape (2,)
    qd: np.ndarray  # joint velocities [rad/s], shape (2,)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)


def theta_from_params(p: ManipulatorParams) -> np.ndarray:
    """True parameter vector of the arm (shape (5,))."""
    return np.array(
        [
            p.l2**2 * p.m2 + p.l1**2 * (p.m1 + p.m2),
            p.l1 * p.l2 * p.m2,
            p.l2**2 * p.m2,
            p.l2 * p.m2,
            p.l1 * (p.m1 + p.m2),
        ]
    )


# ---------------------------------------------------------------------------
# scalar theta-form model (shared with the simulator hot loop)
# ---------------------------------------------------------------------------


def mass_entries(th, c2):
    """(m11, m12, m22) of the symmetric inertia matrix; c2 = cos(q2)."""
    m11 = th[0] + 2.0 * th[1] * c2
    m12 = th[2] + th[1] * c2
    m22 = th[2]
    return m11, m12, m22


def coriolis_entries(th, s2, qd1, qd2):
    """(c11, c12, c21) of the Coriolis matrix (c22 = 0); s2 = sin(q2)."""
    hh = th[1] * s2
    return -hh * qd2, -hh * (qd1 + qd2), hh * qd1


def gravity_entries(th, g, c1, c12):
    """(g1, g2); c1 = cos(q1), c12 = cos(q1 + q2)."""
    g2 = g * th[3] * c12
    g1 = g2 + g * th[4] * c1
    return g1, g2


def regressor_rows(c1, c12, s2, c2, qd1, qd2, a1, a2, g):
    """Rows of the 2x5 acceleration regressor at (q, qd, qdd=(a1, a2))."""
    y12 = 2.0 * c2 * a1 + c2 * a2 - 2.0 * s2 * qd1 * qd2 - s2 * qd2 * qd2
    y22 = c2 * a1 + s2 * qd1 * qd1
    row1 = (a1, y12, a2, g * c12, g * c1)
    row2 = (0.0, y22, a1 + a2, g * c12, 0.0)
    return row1, row2


def regressor_ctrl_rows(c1, c12, s2, c2, qd1, qd2, u1, u2, w1, w2, g):
    """Rows of the 2x5 control regressor: Y theta = M u + C w - G with
    u = lam * ev and w = lam * e (no accelerations enter)."""
    y12 = 2.0 * c2 * u1 + c2 * u2 - s2 * qd2 * w1 - s2 * (qd1 + qd2) * w2
    y22 = c2 * u1 + s2 * qd1 * w1
    row1 = (u1, y12, u2, -g * c12, -g * c1)
    row2 = (0.0, y22, u1 + u2, -g * c12, 0.0)
    return row1, row2


# ---------------------------------------------------------------------------
# public array API
# ---------------------------------------------------------------------------


def eval_dynamics(p: ManipulatorParams, s: JointState):
    """Return (M, C, G) at the given state.

    M is 2x2 symmetric positive definite, C the 2x2 Coriolis/centrifugal
    matrix (bilinear in qd), G the 2-vector of gravity torques.
    """
    th = theta_from_params(p)
    q1, q2 = s.q
    qd1, qd2 = s.qd
    c2, s2 = math.cos(q2), math.sin(q2)
    m11, m12, m22 = mass_entries(th, c2)
    c11, c12m, c21 = coriolis_entries(th, s2, qd1, qd2)
    g1, g2 = gravity_entries(th, p.g, math.cos(q1), math.cos(q1 + q2))
    M = np.array([[m11, m12], [m12, m22]])
    C = np.array([[c11, c12m], [c21, 0.0]])
    G = np.array([g1, g2])
    return M, C, G


def mass_matrix_rate(p: ManipulatorParams, q, qd) -> np.ndarray:
    """Analytic dM/dt = (dM/dq2) * qd2 (M depends on q only through q2)."""
    th = theta_from_params(p)
    s2 = math.sin(q[1])
    d = -th[1] * s2 * qd[1]
    return np.array([[2.0 * d, d], [d, 0.0]])


def jacobian(p: ManipulatorParams, q) -> np.ndarray:
    """End-effector Jacobian mapping joint velocities to (xdot, ydot)."""
    q1, q2 = q
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    return np.array(
        [
            [-p.l1 * s1 - p.l2 * s12, -p.l2 * s12],
            [p.l1 * c1 + p.l2 * c12, p.l2 * c12],
        ]
    )


def forward_kinematics(p: ManipulatorParams, q):
    """End-effector position (x, y)."""
    q1, q2 = q
    x = p.l1 * math.cos(q1) + p.l2 * math.cos(q1 + q2)
    y = p.l1 * math.sin(q1) + p.l2 * math.sin(q1 + q2)
    return x, y


def regressor_full(s: JointState, qdd, g: float = 9.81) -> np.ndarray:
    """Acceleration regressor Y(q, qd, qdd) with Y @ theta = M qdd + C qd + G.

    g must match the ManipulatorParams.g of the arm the identity is taken
    against (it enters the two gravity columns).
    """
    q1, q2 = s.q
    qd1, qd2 = s.qd
    a1, a2 = qdd
    row1, row2 = regressor_rows(
        math.cos(q1), math.cos(q1 + q2), math.sin(q2), math.cos(q2), qd1, qd2, a1, a2, g
    )
    return np.array([row1, row2])


def regressor_ctrl(s: JointState, e, ev, lam: float, g: float = 9.81) -> np.ndarray:
    """Control regressor Y with Y @ theta = M (lam ev) + C (lam e) - G.

    Contains no accelerations, so it is implementable from measured
    positions/velocities and the delayed reference.
    """
    q1, q2 = s.q
    qd1, qd2 = s.qd
    u1, u2 = lam * ev[0], lam * ev[1]
    w1, w2 = lam * e[0], lam * e[1]
    row1, row2 = regressor_ctrl_rows(
        math.cos(q1), math.cos(q1 + q2), math.sin(q2), math.cos(q2), qd1, qd2, u1, u2, w1, w2, g
    )
    return np.array([row1, row2])


def forward_dynamics(p: ManipulatorParams, s: JointState, tau, F) -> np.ndarray:
    """Joint accelerations qdd = M^-1 (F + tau - C qd - G).

    Raises ValueError when M is numerically singular (invalid parameters).
    """
    M, C, G = eval_dynamics(p, s)
    rhs = np.asarray(F, dtype=float) + np.asarray(tau, dtype=float) - C @ s.qd - G
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) < 1e-12:
        raise ValueError("inertia matrix is numerically singular")
    return np.array(
        [
            (M[1, 1] * rhs[0] - M[0, 1] * rhs[1]) / det,
            (M[0, 0] * rhs[1] - M[1, 0] * rhs[0]) / det,
        ]
    )


def mass_eig_bounds(p: ManipulatorParams, n_grid: int = 10000):
    """(rho_min, rho_max): extreme eigenvalues of M over all configurations.

    M depends on q only through cos(q2), so a dense 1-D grid over
    q2 in [0, 2pi) is exhaustive up to grid resolution.
    """
    th = theta_from_params(p)
    c2 = np.cos(np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False))
    m11 = th[0] + 2.0 * th[1] * c2
    m12 = th[2] + th[1] * c2
    m22 = th[2]
    tr = m11 + m22
    disc = np.sqrt(((m11 - m22) * 0.5) ** 2 + m12**2)
    lam_min = tr * 0.5 - disc
    lam_max = tr * 0.5 + disc
    return float(lam_min.min()), float(lam_max.max())
