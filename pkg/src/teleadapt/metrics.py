"""Per-joint tracking performance ratios and their time integrals.

delta_p relates the position error to the delayed commanded position,
delta_f the force error to the delayed contact force; both are defined
as 0 where the denominator vanishes (threshold eps replaces the exact
zero test for floating-point trajectories). The J-indices integrate the
absolute ratios over the run horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_DEFAULT = 1e-6


def delta_p(q_m_delayed, q_s, eps: float = EPS_DEFAULT) -> np.ndarray:
    """Position tracking ratio |q_m(t - T_m) - q_s| / |q_m(t - T_m)| per joint."""
    q_m_delayed = np.asarray(q_m_delayed, dtype=float)
    q_s = np.asarray(q_s, dtype=float)
    den = np.abs(q_m_delayed)
    out = np.zeros_like(den)
    mask = den > eps
    out[mask] = np.abs(q_m_delayed - q_s)[mask] / den[mask]
    return out


def delta_f(F_m, F_s_delayed, eps: float = EPS_DEFAULT) -> np.ndarray:
    """Force tracking ratio |F_m - F_s(t - T_s)| / |F_s(t - T_s)| per joint."""
    F_m = np.asarray(F_m, dtype=float)
    F_s_delayed = np.asarray(F_s_delayed, dtype=float)
    den = np.abs(F_s_delayed)
    out = np.zeros_like(den)
    mask = den > eps
    out[mask] = np.abs(F_m - F_s_delayed)[mask] / den[mask]
    return out


@dataclass
class MetricAccumulator:
    """Running trapezoidal integrals of |delta_p| and |delta_f| per joint."""

    dp_integral: np.ndarray = field(default_factory=lambda: np.zeros(2))
    df_integral: np.ndarray = field(default_factory=lambda: np.zeros(2))
    n_samples: int = 0
    last_t: float = 0.0
    _last_dp: np.ndarray = field(default_factory=lambda: np.zeros(2))
    _last_df: np.ndarray = field(default_factory=lambda: np.zeros(2))


def accumulate(acc: MetricAccumulator, sample, t: float) -> MetricAccumulator:
    """Fold one (delta_p, delta_f) sample at time t into the integrals."""
    dp, df = sample
    dp = np.abs(np.asarray(dp, dtype=float))
    df = np.abs(np.asarray(df, dtype=float))
    if acc.n_samples > 0:
        if t < acc.last_t:
            raise ValueError("samples must arrive in time order")
        half_dt = 0.5 * (t - acc.last_t)
        acc.dp_integral += half_dt * (dp + acc._last_dp)
        acc.df_integral += half_dt * (df + acc._last_df)
    acc.n_samples += 1
    acc.last_t = t
    acc._last_dp = dp
    acc._last_df = df
    return acc
