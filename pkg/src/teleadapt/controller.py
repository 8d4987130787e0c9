"""Tracking errors, control torque, and the composite adaptive update.

The composite law drives the parameter estimate with both the tracking
signal Y^T eta and an auxiliary variable z that tracks P (theta - theta_hat),
where P is a bounded-gain forgetting matrix floored at kappa0 * I. The
floor gives a uniform pull on the estimation error without persistent
excitation. A classical gradient law (theta_hat' = Gamma Y^T eta) is kept
as the comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvariantBreach(Exception):
    """Adaptive-state invariant lost (P asymmetric or below its floor);
    usually means the integration step is too large."""


@dataclass
class GainConfig:
    K: np.ndarray  # 2x2 positive-definite control gain
    lam: float  # auxiliary-variable gain
    Gamma: np.ndarray  # 5x5 positive-definite adaptation gain
    delta: float = 1.0  # constant weight on the auxiliary drive
    alpha_gain: float = 1.0  # scales the error-dependent weight xi
    kappa0: float = 0.1  # lower bound enforced on P
    mu0: float = 1.0  # maximum forgetting rate
    alpha_filter: float = 10.0  # prediction-filter pole [rad/s]
    p0: float = 1.0  # P(0) = p0 * I

    @classmethod
    def from_scalars(cls, k=100.0, lam=0.5, gamma=1.0, **kw):
        """K = k*I and Gamma diagonal; gamma is a scalar or 5 diagonal entries."""
        gamma = np.asarray(gamma, dtype=float)
        Gamma = np.diag(gamma) if gamma.ndim == 1 else float(gamma) * np.eye(5)
        return cls(K=k * np.eye(2), lam=lam, Gamma=Gamma, **kw)

    def validate(self):
        for mat, name in ((self.K, "K"), (self.Gamma, "Gamma")):
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat)[0] <= 0.0:
                raise ValueError(f"{name} must be positive definite")
        for name in ("lam", "delta", "alpha_gain", "kappa0", "mu0", "alpha_filter", "p0"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"gain {name} must be > 0")
        if self.p0 < self.kappa0:
            raise ValueError("p0 must be >= kappa0 so that P(0) respects the floor")


@dataclass
class ControllerState:
    theta_hat: np.ndarray  # (5,) parameter estimate
    z: np.ndarray  # (5,) auxiliary variable, z(0) = 0
    P: np.ndarray  # (5,5) forgetting matrix, P(0) = p0 * I
    mu: float  # current forgetting rate
    filt_y: np.ndarray  # (2,) filtered torque+force
    filt_Y: np.ndarray  # (2,5) filtered acceleration regressor

    @classmethod
    def initial(cls, theta0, gains: GainConfig):
        P = gains.p0 * np.eye(5)
        return cls(
            theta_hat=np.asarray(theta0, dtype=float).copy(),
            z=np.zeros(5),
            P=P,
            mu=forgetting_rate(P, gains),
            filt_y=np.zeros(2),
            filt_Y=np.zeros((2, 5)),
        )


def tracking_errors(q_self, qd_self, q_other_delayed, qd_other_delayed, lam: float):
    """(e, ev, eta): position error against the delayed peer position,
    velocity error, and the sliding-like variable eta = qd + lam * e."""
    e = np.asarray(q_self, dtype=float) - q_other_delayed
    ev = np.asarray(qd_self, dtype=float) - qd_other_delayed
    eta = qd_self + lam * e
    return e, ev, eta


def control_torque(Y_ctrl, theta_hat, K, eta) -> np.ndarray:
    """tau = -Y_ctrl theta_hat - K eta."""
    return -Y_ctrl @ theta_hat - K @ eta


def prediction_error(tau, F, Y_io, theta_hat) -> np.ndarray:
    """e_o = (tau + F) - Y_io theta_hat.

    Since tau + F equals M qdd + C qd + G = Y_io theta along the true
    dynamics, e_o = Y_io (theta - theta_hat).
    """
    return (np.asarray(tau, dtype=float) + F) - Y_io @ theta_hat


def filter_step(state, u, alpha_filter: float, dt: float):
    """One explicit step of dw/dt = alpha (u - w), elementwise.

    Realizes the unit-DC-gain low-pass alpha/(s + alpha) applied to the
    torque signal and to each regressor entry.
    """
    return state + dt * alpha_filter * (np.asarray(u, dtype=float) - state)


def forgetting_rate(P, gains: GainConfig) -> float:
    """mu = mu0 (1 - kappa0 ||P^-1||), clipped at zero.

    ||P^-1|| is the spectral norm, i.e. 1/lambda_min(P) for symmetric
    positive-definite P, which makes mu hit zero exactly at the floor
    P = kappa0 I. The clip guards roundoff once lambda_min has decayed
    onto the floor; in exact arithmetic mu never becomes negative.
    """
    lam_min = float(np.linalg.eigvalsh(P)[0])
    return max(0.0, gains.mu0 * (1.0 - gains.kappa0 / lam_min))


def xi_weight(v, gains: GainConfig) -> float:
    """Error-dependent weight xi = alpha_gain ||Y_ctrl^T eta|| / kappa0."""
    return gains.alpha_gain * float(np.linalg.norm(v)) / gains.kappa0


def adaptive_rates(theta_hat, z, P, mu, v, Y_pred, e_pred, gains: GainConfig):
    """Time derivatives (dtheta_hat, dz, dP) of the composite law.

    v = Y_ctrl^T eta is the tracking drive; (Y_pred, e_pred) is either the
    raw acceleration-regressor pair or its filtered counterpart, both
    satisfying e_pred = Y_pred (theta - theta_hat).
    """
    xi = xi_weight(v, gains)
    dth = gains.Gamma @ (v + (xi + gains.delta) * z)
    dz = -mu * z + Y_pred.T @ e_pred - P @ dth
    dP = -mu * P + Y_pred.T @ Y_pred
    return dth, dz, dP


def composite_update_step(
    cs: ControllerState, Y_ctrl, eta, Y_pred, e_pred, gains: GainConfig, dt: float
) -> ControllerState:
    """Advance (theta_hat, z, P) by one explicit Euler step.

    The returned P is re-symmetrized; InvariantBreach is raised if the
    input P has lost symmetry beyond 1e-9 or the updated P drops below
    kappa0 I by more than 1e-6.
    """
    if np.abs(cs.P - cs.P.T).max() > 1e-9:
        raise InvariantBreach("forgetting matrix P lost symmetry")
    mu = forgetting_rate(cs.P, gains)
    v = Y_ctrl.T @ eta
    dth, dz, dP = adaptive_rates(cs.theta_hat, cs.z, cs.P, mu, v, Y_pred, e_pred, gains)
    P_new = cs.P + dt * dP
    P_new = 0.5 * (P_new + P_new.T)
    lam_min = float(np.linalg.eigvalsh(P_new)[0])
    if lam_min < gains.kappa0 - 1e-6:
        raise InvariantBreach(
            f"P floor violated: lambda_min = {lam_min} < kappa0 = {gains.kappa0} "
            "(step size too large)"
        )
    return ControllerState(
        theta_hat=cs.theta_hat + dt * dth,
        z=cs.z + dt * dz,
        P=P_new,
        mu=forgetting_rate(P_new, gains),
        filt_y=cs.filt_y.copy(),
        filt_Y=cs.filt_Y.copy(),
    )


def classical_update_step(theta_hat, Y_ctrl, eta, Gamma, dt: float) -> np.ndarray:
    """Baseline gradient law: one explicit step of theta_hat' = Gamma Y^T eta."""
    return theta_hat + dt * (Gamma @ (Y_ctrl.T @ eta))
