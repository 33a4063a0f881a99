"""Short-term working-performance curves.

An employee's performance over a continuous working stint rises along a
Gaussian flank from ``Q*U`` to the peak ``U``, stays flat for ``peak_len``
minutes and then decays along a second Gaussian flank. All five curve
parameters are driven by the skill level and the five emotional states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_NAMES = ("depression", "activation", "anxiety", "concentration", "endurance")


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(float(x), lo), hi)


@dataclass(frozen=True)
class EmotionalState:
    """Five emotional levels, each a real number in [1, 5] (clamped)."""

    depression: float = 3.0
    activation: float = 3.0
    anxiety: float = 3.0
    concentration: float = 3.0
    endurance: float = 3.0

    def __post_init__(self):
        for name in STATE_NAMES:
            object.__setattr__(self, name, _clamp(getattr(self, name), 1.0, 5.0))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "EmotionalState":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in STATE_NAMES}


@dataclass(frozen=True)
class CurveBaselines:
    """Baseline rising, peak and falling lengths in minutes."""

    t_rise: float
    t_peak: float
    t_fall: float

    def __post_init__(self):
        if min(self.t_rise, self.t_peak, self.t_fall) <= 0:
            raise ValueError("curve baselines must be strictly positive")


@dataclass(frozen=True)
class PerformanceCurve:
    u_max: float
    q_init: float
    sigma_rise: float
    peak_len: float
    sigma_fall: float
    mu_rise: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.u_max <= 1.0:
            raise ValueError(f"u_max out of [0, 1]: {self.u_max}")
        if not 0.0 < self.q_init <= 1.0:
            raise ValueError(f"q_init out of (0, 1]: {self.q_init}")
        if min(self.sigma_rise, self.peak_len, self.sigma_fall) <= 0:
            raise ValueError("curve lengths must be strictly positive")
        object.__setattr__(self, "mu_rise", rise_center(self.sigma_rise, self.q_init))

    @property
    def peak_end(self) -> float:
        return self.mu_rise + self.peak_len

    def as_array(self) -> np.ndarray:
        """(u_max, q_init, sigma_rise, peak_len, sigma_fall, mu_rise)."""
        return np.array([self.u_max, self.q_init, self.sigma_rise,
                         self.peak_len, self.sigma_fall, self.mu_rise])


def rise_center(sigma_rise: float, q_init: float) -> float:
    # pf(0) = Q*U on the rising flank pins the center; Q = 1 skips the rise.
    if q_init >= 1.0:
        return 0.0
    return sigma_rise * math.sqrt(2.0 * math.log(1.0 / q_init))


def curve_parameters(skill, depression, activation, anxiety, concentration,
                     endurance, t_rise, t_peak, t_fall):
    """Vectorised curve parameters; accepts scalars or broadcastable arrays.

    Returns the tuple ``(u_max, q_init, sigma_rise, peak_len, sigma_fall)``.
    """
    u_max = skill * (6.0 - depression) / 5.0
    q_init = np.sqrt(activation / 6.0)
    sigma_rise = t_rise * ((11.0 - activation) / 5.0) ** (1.0 + anxiety / 5.0)
    peak_len = t_peak * (1.0 + concentration / 5.0) * ((6.0 - anxiety) / 5.0)
    sigma_fall = t_fall * (1.0 + endurance / 5.0) ** ((7.0 - anxiety) / 2.0)
    return u_max, q_init, sigma_rise, peak_len, sigma_fall


def derive_curve(skill: float, state: EmotionalState, base: CurveBaselines) -> PerformanceCurve:
    """Performance curve of an employee with ``skill`` in the given state."""
    skill = _clamp(skill, 0.0, 1.0)
    u, q, s1, w, s2 = curve_parameters(
        skill, state.depression, state.activation, state.anxiety,
        state.concentration, state.endurance,
        base.t_rise, base.t_peak, base.t_fall)
    return PerformanceCurve(float(u), min(float(q), 1.0), float(s1), float(w), float(s2))


def performance_at(curve: PerformanceCurve, t) -> float | np.ndarray:
    """Performance after ``t`` minutes of continuous work (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("working time must be non-negative")
    mu, end = curve.mu_rise, curve.peak_end
    rise = np.exp(-((t_arr - mu) ** 2) / (2.0 * curve.sigma_rise ** 2))
    fall = np.exp(-((t_arr - end) ** 2) / (2.0 * curve.sigma_fall ** 2))
    out = curve.u_max * np.where(t_arr < mu, rise, np.where(t_arr <= end, 1.0, fall))
    return float(out) if out.ndim == 0 else out


def sample_curve(curve: PerformanceCurve, horizon: float = 480.0, step: float = 1.0):
    """(t, pf) samples on a regular grid, handy for plotting."""
    t = np.arange(0.0, horizon + step / 2, step)
    return t, performance_at(curve, t)
