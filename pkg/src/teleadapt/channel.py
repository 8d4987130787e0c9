"""Delayed communication link: sinusoidal delay profiles with validated
bounds, and fixed-step ring-buffer histories answering interpolated
delayed reads q(t - T(t)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class AssumptionViolation(Exception):
    """Delay profile outside the admissible class (negative delay possible,
    or delay rate bound >= 1)."""


@dataclass(frozen=True)
class DelayProfile:
    """T(t) = base + sum_k a_k * sin(w_k * t)."""

    base: float
    sinusoids: tuple = ()  # ((amplitude [s], angular frequency [rad/s]), ...)


def delay_value(p: DelayProfile, t: float) -> float:
    T = p.base
    for a, w in p.sinusoids:
        T += a * math.sin(w * t)
    return T


def validate_profile(p: DelayProfile):
    """Return (h, d) = (sup T, sup |dT/dt|) for an admissible profile.

    Raises AssumptionViolation when the delay can go negative
    (base - sum|a_k| < 0) or the rate bound fails (d = sum|a_k w_k| >= 1).
    """
    amp = sum(abs(a) for a, _ in p.sinusoids)
    h = p.base + amp
    d = sum(abs(a * w) for a, w in p.sinusoids)
    # tolerance keeps exactly-touching profiles (base == sum of amplitudes)
    # admissible despite summation roundoff
    if p.base - amp < -1e-12:
        raise AssumptionViolation(
            f"delay can become negative: base {p.base} < oscillation amplitude {amp}"
        )
    if d >= 1.0:
        raise AssumptionViolation(
            f"delay-rate bound violated: sup|dT/dt| = {d} >= 1 "
            "(time-varying delays must change slower than real time)"
        )
    return h, d


class SignalHistory:
    """Uniformly sampled 2-vector signal with a constant pre-history.

    A ring buffer keeps the most recent span of samples (at least the
    maximum delay plus slack). Reads interpolate linearly between the
    bracketing samples; reads before the first sample return the recorded
    initial value; reads past the newest sample raise ValueError.
    """

    def __init__(self, dt: float, initial, span: float):
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        self.dt = dt
        self.iv0 = float(initial[0])
        self.iv1 = float(initial[1])
        self.size = int(math.ceil(span / dt)) + 4
        self.buf0 = [self.iv0] * self.size
        self.buf1 = [self.iv1] * self.size
        self.k_latest = 0  # sample index of the newest entry; t_k = k * dt

    @property
    def latest_time(self) -> float:
        return self.k_latest * self.dt

    def append(self, value):
        """Append the sample at t = latest_time + dt."""
        self.k_latest += 1
        i = self.k_latest % self.size
        self.buf0[i] = float(value[0])
        self.buf1[i] = float(value[1])

    def sample(self, t: float):
        """Interpolated value at time t (<= latest_time)."""
        k = t / self.dt
        if k <= 0.0:
            return self.iv0, self.iv1
        kf = int(k)
        frac = k - kf
        if kf >= self.k_latest:
            if k - self.k_latest > 1e-9:
                raise ValueError(
                    f"future read: t = {t} is past the newest sample at {self.latest_time}"
                )
            i = self.k_latest % self.size
            return self.buf0[i], self.buf1[i]
        if kf < self.k_latest - self.size + 2:
            raise ValueError(f"read at t = {t} is older than the retained history span")
        i0 = kf % self.size
        i1 = (kf + 1) % self.size
        return (
            self.buf0[i0] + frac * (self.buf0[i1] - self.buf0[i0]),
            self.buf1[i0] + frac * (self.buf1[i1] - self.buf1[i0]),
        )


def sample_delayed(hist: SignalHistory, t: float, T: float) -> np.ndarray:
    """Delayed read: signal value at t - T (T >= 0)."""
    v0, v1 = hist.sample(t - T)
    return np.array([v0, v1])
