"""Closed-loop stability certificate: build the scalar constants entering
the delay-dependent matrix inequality and search for a feasible witness.

With scalar witnesses R_i = r_i * I every block of the 4-block inequality
is a scalar multiple of the identity, so negative definiteness decouples
into two 2x2 Schur conditions:

    pi_1 < -h_s / r_s      and      pi_2 < -h_m / r_m

with pi_1 = -1/lam_m + h_m r_m + nu_m and pi_2 = -1/lam_s + h_s r_s + nu_s
(the coupling terms nu are doubled in the forced-motion variant). The
returned witness is re-verified against the assembled 8x8 matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import DelayProfile, validate_profile
from .controller import GainConfig
from .dynamics import ManipulatorParams, mass_eig_bounds

MODE_FREE = "theorem"  # free-motion inequality
MODE_FORCED = "proposition"  # forced-motion variant (doubled couplings)


@dataclass(frozen=True)
class StabilityConstants:
    rho_m_M: float  # master inertia upper bound
    rho_s_M: float  # slave inertia upper bound
    h_m: float  # delay upper bounds [s]
    h_s: float
    d_m: float  # delay-rate bounds (< 1)
    d_s: float
    k_m: float  # lambda_min of the control gains
    k_s: float
    lam_m: float
    lam_s: float
    nu_m: float  # velocity-coupling constants
    nu_s: float
    c_m: float  # Coriolis norm bounds (diagnostic only)
    c_s: float


@dataclass(frozen=True)
class LmiWitness:
    r_m: float
    r_s: float
    mode: str
    margin: float  # largest eigenvalue of the assembled matrix (< 0)


def nu_coupling(lam_other: float, rho_other_max: float, d_self: float, k_other: float) -> float:
    """nu_i = lam_j (rho_j^M)^2 d_i^2 / ((1 - d_i) k_j^2), j the other side."""
    return lam_other * rho_other_max**2 * d_self**2 / ((1.0 - d_self) * k_other**2)


def coriolis_bound(p: ManipulatorParams) -> float:
    """c with ||C(q, x) y|| <= c ||x|| ||y||: Frobenius-type bound sqrt(3) l1 l2 m2."""
    return math.sqrt(3.0) * p.l1 * p.l2 * p.m2


def stability_constants(
    master: ManipulatorParams,
    slave: ManipulatorParams,
    gains_m: GainConfig,
    gains_s: GainConfig,
    profile_m: DelayProfile,
    profile_s: DelayProfile,
) -> StabilityConstants:
    """Assemble all scalars entering the inequality from the physical setup.

    Propagates AssumptionViolation when a delay profile is inadmissible.
    """
    h_m, d_m = validate_profile(profile_m)
    h_s, d_s = validate_profile(profile_s)
    _, rho_m = mass_eig_bounds(master)
    _, rho_s = mass_eig_bounds(slave)
    k_m = float(np.linalg.eigvalsh(gains_m.K)[0])
    k_s = float(np.linalg.eigvalsh(gains_s.K)[0])
    return StabilityConstants(
        rho_m_M=rho_m,
        rho_s_M=rho_s,
        h_m=h_m,
        h_s=h_s,
        d_m=d_m,
        d_s=d_s,
        k_m=k_m,
        k_s=k_s,
        lam_m=gains_m.lam,
        lam_s=gains_s.lam,
        nu_m=nu_coupling(gains_s.lam, rho_s, d_m, k_s),
        nu_s=nu_coupling(gains_m.lam, rho_m, d_s, k_m),
        c_m=coriolis_bound(master),
        c_s=coriolis_bound(slave),
    )


def _pi_terms(c: StabilityConstants, r_m, r_s, mode: str):
    mult = 2.0 if mode == MODE_FORCED else 1.0
    pi1 = -1.0 / c.lam_m + c.h_m * r_m + mult * c.nu_m
    pi2 = -1.0 / c.lam_s + c.h_s * r_s + mult * c.nu_s
    return pi1, pi2


def assemble_lmi(c: StabilityConstants, r_m: float, r_s: float, mode: str = MODE_FREE):
    """Full 8x8 matrix (each block a scalar multiple of I_2)."""
    pi1, pi2 = _pi_terms(c, r_m, r_s, mode)
    S = np.array(
        [
            [pi1, 0.0, 0.0, -1.0],
            [0.0, pi2, -1.0, 0.0],
            [0.0, -1.0, -r_m / c.h_m, 0.0],
            [-1.0, 0.0, 0.0, -r_s / c.h_s],
        ]
    )
    return np.kron(S, np.eye(2))


def verify_witness(c: StabilityConstants, r_m: float, r_s: float, mode: str = MODE_FREE) -> float:
    """Largest eigenvalue (margin) of the assembled matrix; negative = feasible."""
    return float(np.linalg.eigvalsh(assemble_lmi(c, r_m, r_s, mode))[-1])


def _block_margin(a, b):
    # largest eigenvalue of [[a, -1], [-1, -b]]
    return 0.5 * ((a - b) + np.sqrt((a + b) ** 2 + 4.0))


def _grid_margin(c: StabilityConstants, r_m, r_s, mode: str):
    """Margin of the inequality over broadcastable r grids (closed form)."""
    pi1, pi2 = _pi_terms(c, r_m, r_s, mode)
    return np.maximum(_block_margin(pi1, r_s / c.h_s), _block_margin(pi2, r_m / c.h_m))


def lmi_feasible(c: StabilityConstants, mode: str = MODE_FREE):
    """Search scalar witnesses r_m, r_s > 0; return an LmiWitness or None.

    Deterministic: a 201x201 logarithmic grid over [1e-4, 1e4]^2 picks the
    best margin, followed by coordinate-wise bisection refinement. The
    reported margin is recomputed from the assembled matrix.
    """
    if mode not in (MODE_FREE, MODE_FORCED):
        raise ValueError(f"unknown mode {mode!r}")
    grid = np.logspace(-4.0, 4.0, 201)
    margins = _grid_margin(c, grid[:, None], grid[None, :], mode)
    i, j = np.unravel_index(np.argmin(margins), margins.shape)
    if margins[i, j] >= 0.0:
        return None
    r_m, r_s = float(grid[i]), float(grid[j])

    # coordinate-wise bisection on log10(r) around the best grid point
    def margin_at(lrm, lrs):
        return float(_grid_margin(c, 10.0**lrm, 10.0**lrs, mode))

    lrm, lrs = math.log10(r_m), math.log10(r_s)
    step = 8.0 / 200.0
    for _ in range(3):
        for coord in (0, 1):
            lo = (lrm if coord == 0 else lrs) - step
            hi = (lrm if coord == 0 else lrs) + step
            for _ in range(30):
                m1 = (2 * lo + hi) / 3.0
                m2 = (lo + 2 * hi) / 3.0
                f1 = margin_at(m1, lrs) if coord == 0 else margin_at(lrm, m1)
                f2 = margin_at(m2, lrs) if coord == 0 else margin_at(lrm, m2)
                if f1 <= f2:
                    hi = m2
                else:
                    lo = m1
            best = 0.5 * (lo + hi)
            if coord == 0:
                lrm = best
            else:
                lrs = best
    r_m, r_s = 10.0**lrm, 10.0**lrs
    margin = verify_witness(c, r_m, r_s, mode)
    if margin >= 0.0:
        return None
    return LmiWitness(r_m=r_m, r_s=r_s, mode=mode, margin=margin)
