"""Takagi-Sugeno-Kang neuro-fuzzy networks for emotion and impairment assessment.

Antecedents are Gaussian memberships fixed at (random) initialisation; the
linear rule consequents are fitted by exact recursive least squares, so
training can proceed online, chunk by chunk.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from enum import IntEnum
from functools import lru_cache
from pathlib import Path

import numpy as np

from .perf_model import STATE_NAMES, EmotionalState

RLS_DELTA = 1e-3
_RLS_CHUNK = 128

# Declared ranges used to scale each factor into [0, 1] before inference.
FACTOR_RANGES = {
    "age": (18.0, 65.0),
    "gender": (0.0, 1.0),
    "bmi": (16.0, 40.0),
    "commuting_hours": (0.0, 4.0),
    "sleeping_hours": (4.0, 10.0),
    "pit": (0.0, 5000.0),
    "pit_sad": (0.0, 3000.0),
    "yoe": (0.0, 40.0),
    "d_cont": (0.0, 30.0),
    "d_month": (0.0, 30.0),
    "d_season": (0.0, 90.0),
    "t_day": (0.0, 12.0),
    "t_week": (0.0, 70.0),
    "t_month": (0.0, 260.0),
    "t_season": (0.0, 780.0),
    "t_day_hard": (0.0, 12.0),
    "t_week_hard": (0.0, 70.0),
    "t_month_hard": (0.0, 260.0),
    "t_season_hard": (0.0, 780.0),
}
FACTOR_NAMES = tuple(FACTOR_RANGES)
# Factors that evolve with the schedule during a simulation.
DYNAMIC_FACTORS = ("d_cont", "d_month", "d_season", "t_day", "t_week", "t_month",
                   "t_season", "t_day_hard", "t_week_hard", "t_month_hard", "t_season_hard")


@dataclass
class StressFactors:
    age: float = 35.0
    gender: float = 0.0
    bmi: float = 23.0
    commuting_hours: float = 1.0
    sleeping_hours: float = 7.0
    pit: float = 800.0
    pit_sad: float = 500.0
    yoe: float = 5.0
    d_cont: float = 0.0
    d_month: float = 0.0
    d_season: float = 0.0
    t_day: float = 0.0
    t_week: float = 0.0
    t_month: float = 0.0
    t_season: float = 0.0
    t_day_hard: float = 0.0
    t_week_hard: float = 0.0
    t_month_hard: float = 0.0
    t_season_hard: float = 0.0

    def violations(self) -> list[str]:
        out = [f"{f.name} must be non-negative" for f in fields(self)
               if getattr(self, f.name) < 0]
        for span in ("day", "week", "month", "season"):
            if getattr(self, f"t_{span}_hard") > getattr(self, f"t_{span}") + 1e-9:
                out.append(f"t_{span}_hard exceeds t_{span}")
        if not self.d_cont <= self.d_month <= self.d_season:
            out.append("require d_cont <= d_month <= d_season")
        return out

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FACTOR_NAMES], dtype=float)

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in FACTOR_NAMES}


def factor_bounds() -> np.ndarray:
    """(19, 2) array of declared (low, high) factor ranges."""
    return np.array([FACTOR_RANGES[n] for n in FACTOR_NAMES], dtype=float)


def normalize_factors(raw) -> np.ndarray:
    """Scale raw factor vectors (..., 19) into [0, 1]."""
    b = factor_bounds()
    z = (np.asarray(raw, dtype=float) - b[:, 0]) / (b[:, 1] - b[:, 0])
    return np.clip(z, 0.0, 1.0)


# --------------------------------------------------------------------------- #
# TSK network

@dataclass
class TskNetwork:
    centers: np.ndarray       # (R, p)
    spreads: np.ndarray       # (R, p)
    coef: np.ndarray          # (R, p + 1); column 0 is the intercept
    covariance: np.ndarray    # (R(p+1), R(p+1)) RLS state

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.spreads = np.asarray(self.spreads, dtype=float)
        self.coef = np.asarray(self.coef, dtype=float)
        if self.centers.shape != self.spreads.shape or self.centers.ndim != 2:
            raise ValueError("centers and spreads must share shape (R, p)")
        if self.coef.shape != (self.n_rules, self.n_inputs + 1):
            raise ValueError(f"coefficient array must have shape {(self.n_rules, self.n_inputs + 1)}")
        if not np.all(self.spreads > 0):
            raise ValueError("spreads must be strictly positive")

    @property
    def n_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.centers.shape[1]

    def copy(self) -> "TskNetwork":
        return TskNetwork(self.centers.copy(), self.spreads.copy(),
                          self.coef.copy(), self.covariance.copy())

    def to_dict(self, include_covariance: bool = False) -> dict:
        d = {"n_inputs": self.n_inputs, "n_rules": self.n_rules,
             "centers": self.centers.tolist(), "spreads": self.spreads.tolist(),
             "coefficients": self.coef.tolist()}
        if include_covariance:
            d["covariance"] = self.covariance.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TskNetwork":
        p, r = int(d["n_inputs"]), int(d["n_rules"])
        centers = np.array(d["centers"], dtype=float).reshape(r, p)
        spreads = np.array(d["spreads"], dtype=float).reshape(r, p)
        coef = np.array(d["coefficients"], dtype=float).reshape(r, p + 1)
        if "covariance" in d:
            cov = np.array(d["covariance"], dtype=float)
        else:
            cov = np.eye(r * (p + 1)) / RLS_DELTA
        return cls(centers, spreads, coef, cov)

    def save(self, path, include_covariance: bool = False) -> None:
        # repr-based float formatting is shortest round-trip, hence value-exact
        Path(path).write_text(json.dumps(self.to_dict(include_covariance)))

    @classmethod
    def load(cls, path) -> "TskNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_random(n_inputs: int, n_rules: int, rng_seed: int, ranges=None) -> TskNetwork:
    """Random antecedents over the declared input ranges, zero consequents.

    ``ranges`` is an optional (p, 2) array of (low, high); inputs default to [0, 1].
    """
    if n_inputs < 1 or n_rules < 1:
        raise ValueError("need at least one input and one rule")
    if ranges is None:
        ranges = np.tile([0.0, 1.0], (n_inputs, 1))
    ranges = np.asarray(ranges, dtype=float)
    lo, width = ranges[:, 0], ranges[:, 1] - ranges[:, 0]
    rng = np.random.default_rng(rng_seed)
    centers = lo + width * rng.random((n_rules, n_inputs))
    spreads = width * rng.uniform(0.2, 0.8, size=(n_rules, n_inputs))
    coef = np.zeros((n_rules, n_inputs + 1))
    cov = np.eye(n_rules * (n_inputs + 1)) / RLS_DELTA
    return TskNetwork(centers, spreads, coef, cov)


def rule_weights(net: TskNetwork, x) -> np.ndarray:
    """Normalised firing strengths for one input (p,) or a batch (n, p)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != net.n_inputs:
        raise ValueError(f"expected {net.n_inputs} inputs, got {X.shape[1]}")
    d = (X[:, None, :] - net.centers[None]) / net.spreads[None]
    mu = np.exp(-0.5 * d * d)                    # (n, R, p) memberships
    w = normalize_firing(np.prod(mu, axis=2))    # product t-norm
    return w[0] if single else w


def normalize_firing(firing) -> np.ndarray:
    """Divide firing strengths (..., R) by their sum; all-zero rows become uniform."""
    f = np.asarray(firing, dtype=float)
    total = f.sum(axis=-1, keepdims=True)
    ok = (total > 0) & np.isfinite(total)
    return np.where(ok, f / np.where(ok, total, 1.0), 1.0 / f.shape[-1])


def _regressors(net: TskNetwork, X: np.ndarray) -> np.ndarray:
    w = rule_weights(net, X)                                   # (n, R)
    ext = np.hstack([np.ones((X.shape[0], 1)), X])             # (n, p+1)
    return (w[:, :, None] * ext[:, None, :]).reshape(X.shape[0], -1)


def tsk_infer(net: TskNetwork, x):
    """Center-of-sets output; scalar for a single input, array for a batch."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    out = _regressors(net, X) @ net.coef.ravel()
    return float(out[0]) if x.ndim == 1 else out


def train_sequential(net: TskNetwork, batch) -> TskNetwork:
    """Recursive least-squares update of the consequents on ``batch``.

    ``batch`` is an iterable of ``(x, y)`` pairs or a tuple ``(X, y)`` of arrays.
    The network is updated in place and returned; antecedents are untouched.
    """
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[1]) == 1 \
            and np.ndim(batch[0]) == 2:
        X, y = np.asarray(batch[0], float), np.asarray(batch[1], float)
    else:
        pairs = list(batch)
        if not pairs:
            return net
        X = np.array([np.asarray(p[0], float) for p in pairs])
        y = np.array([float(p[1]) for p in pairs])
    if X.shape[0] == 0:
        return net
    if X.shape[1] != net.n_inputs:
        raise ValueError(f"expected {net.n_inputs} inputs, got {X.shape[1]}")

    theta = net.coef.ravel().copy()
    P = net.covariance
    for start in range(0, X.shape[0], _RLS_CHUNK):
        H = _regressors(net, X[start:start + _RLS_CHUNK])
        t = y[start:start + _RLS_CHUNK]
        PHt = P @ H.T
        S = np.eye(H.shape[0]) + H @ PHt
        try:
            K = np.linalg.solve(S, PHt.T).T
        except np.linalg.LinAlgError:
            K = PHt @ np.linalg.pinv(S)
        theta = theta + K @ (t - H @ theta)
        P = P - K @ PHt.T
        P = 0.5 * (P + P.T)
    net.coef = theta.reshape(net.coef.shape)
    net.covariance = P
    return net


# --------------------------------------------------------------------------- #
# Assessors

class Impairment(IntEnum):
    NONE = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3


@dataclass
class EmotionAssessor:
    """One 20-input network per emotional state (baseline level + 19 factors)."""

    nets: list

    def __post_init__(self):
        if len(self.nets) != 5 or any(n.n_inputs != 20 for n in self.nets):
            raise ValueError("EmotionAssessor needs five 20-input networks")

    def assess_array(self, baselines, factors_norm) -> np.ndarray:
        """Batch form: baselines (n, 5) levels, factors_norm (n, 19) in [0, 1]."""
        B = np.atleast_2d(np.asarray(baselines, dtype=float))
        Z = np.atleast_2d(np.asarray(factors_norm, dtype=float))
        out = np.empty((B.shape[0], 5))
        for s, net in enumerate(self.nets):
            X = np.hstack([(B[:, s:s + 1] - 1.0) / 4.0, Z])
            out[:, s] = tsk_infer(net, X)
        return np.clip(out, 1.0, 5.0)

    def to_dict(self) -> dict:
        return {name: net.to_dict() for name, net in zip(STATE_NAMES, self.nets)}

    @classmethod
    def from_dict(cls, d: dict) -> "EmotionAssessor":
        return cls([TskNetwork.from_dict(d[name]) for name in STATE_NAMES])


@dataclass
class ImpairmentAssessor:
    net: TskNetwork
    severe_threshold: float = 0.8
    mild_threshold: float = 0.25
    moderate_threshold: float = 0.5

    def __post_init__(self):
        if self.net.n_inputs != 5:
            raise ValueError("ImpairmentAssessor needs a 5-input network")
        if not 0.0 < self.severe_threshold < 1.0:
            raise ValueError("severe_threshold must lie in (0, 1)")

    def raw(self, states) -> np.ndarray | float:
        S = np.asarray(states, dtype=float)
        val = np.clip(tsk_infer(self.net, (S - 1.0) / 4.0), 0.0, 1.0)
        return float(val) if S.ndim == 1 else val

    def grade(self, raw: float) -> Impairment:
        # boundaries are inclusive upward
        if raw >= self.severe_threshold:
            return Impairment.SEVERE
        if raw >= self.moderate_threshold:
            return Impairment.MODERATE
        if raw >= self.mild_threshold:
            return Impairment.MILD
        return Impairment.NONE

    def to_dict(self) -> dict:
        return {"net": self.net.to_dict(), "severe_threshold": self.severe_threshold,
                "mild_threshold": self.mild_threshold,
                "moderate_threshold": self.moderate_threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "ImpairmentAssessor":
        return cls(TskNetwork.from_dict(d["net"]), d.get("severe_threshold", 0.8),
                   d.get("mild_threshold", 0.25), d.get("moderate_threshold", 0.5))


def assess_emotions(a: EmotionAssessor, baseline: EmotionalState,
                    f: StressFactors) -> EmotionalState:
    z = normalize_factors(f.as_array())
    return EmotionalState.from_array(a.assess_array(baseline.as_array()[None], z[None])[0])


def assess_impairment(a: ImpairmentAssessor, state: EmotionalState) -> Impairment:
    return a.grade(a.raw(state.as_array()))


# --------------------------------------------------------------------------- #
# Synthetic ground truth (stand-in for the unavailable survey data)

_IDX = {n: i for i, n in enumerate(FACTOR_NAMES)}


def synthetic_emotions(baselines, factors_norm) -> np.ndarray:
    """Hidden nonlinear map (baseline levels, normalised factors) -> emotions.

    Workload raises depression and anxiety and erodes activation,
    concentration and endurance; hard work drives anxiety hardest.
    """
    B = np.atleast_2d(np.asarray(baselines, dtype=float))
    Z = np.atleast_2d(np.asarray(factors_norm, dtype=float))
    z = {n: Z[:, i] for n, i in _IDX.items()}
    sleep_def = np.clip((8.0 - (4.0 + 6.0 * z["sleeping_hours"])) / 4.0, 0.0, 1.0)
    fin = z["pit_sad"] - 0.5 * z["pit"]
    bmi_dev = np.abs(z["bmi"] - 0.3)
    day, week = z["t_day"], z["t_week"]
    dep = (B[:, 0] + 1.2 * week ** 2 + 0.8 * z["d_cont"] + 0.6 * sleep_def
           + 0.3 * fin + 0.3 * z["commuting_hours"] - 0.3 * z["yoe"])
    act = (B[:, 1] - 1.6 * day * (0.5 + day) - 0.5 * sleep_def + 0.3 * (1.0 - z["age"]))
    anx = (B[:, 2] + 2.0 * z["t_day_hard"] + 0.8 * np.tanh(3.0 * z["t_week_hard"])
           + 0.5 * day + 0.3 * fin)
    con = (B[:, 3] - 2.0 * day ** 2 - 0.6 * sleep_def + 0.4 * z["yoe"] - 0.3 * bmi_dev)
    end = (B[:, 4] - 1.5 * np.tanh(2.0 * week) - 0.8 * z["d_cont"]
           - 0.4 * z["t_month"] + 0.3 * (1.0 - z["age"]))
    return np.clip(np.stack([dep, act, anx, con, end], axis=1), 1.0, 5.0)


def synthetic_impairment(states) -> np.ndarray:
    """Hidden impairment degree in [0, 1]; only extreme distress reaches Severe."""
    S = (np.atleast_2d(np.asarray(states, dtype=float)) - 1.0) / 4.0
    stress = 0.3 * S[:, 0] + 0.4 * S[:, 2] + 0.2 * (1.0 - S[:, 4]) + 0.1 * (1.0 - S[:, 3])
    return np.clip(stress, 0.0, 1.0) ** 1.5


def sample_factors(n: int, rng) -> np.ndarray:
    """Raw factor vectors spread over the declared ranges, internally consistent."""
    b = factor_bounds()
    raw = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((n, 19))
    raw[:, _IDX["gender"]] = rng.integers(0, 2, n)
    raw[:, _IDX["d_month"]] = np.maximum(raw[:, _IDX["d_month"]], raw[:, _IDX["d_cont"]])
    raw[:, _IDX["d_season"]] = np.maximum(raw[:, _IDX["d_season"]], raw[:, _IDX["d_month"]])
    for span in ("day", "week", "month", "season"):
        tot = raw[:, _IDX[f"t_{span}"]]
        raw[:, _IDX[f"t_{span}_hard"]] = tot * rng.random(n)
    return raw


def make_emotion_dataset(n: int, seed: int, noise: float = 0.2):
    """(baselines, normalised factors, noisy emotion targets)."""
    rng = np.random.default_rng(seed)
    B = rng.integers(1, 6, size=(n, 5)).astype(float)
    Z = normalize_factors(sample_factors(n, rng))
    Y = synthetic_emotions(B, Z) + noise * rng.standard_normal((n, 5))
    return B, Z, Y


def train_assessors(seed: int = 0, n_samples: int = 3000, n_rules: int = 12,
                    noise: float = 0.2, severe_threshold: float = 0.8):
    """Fit both assessors on synthetic data; deterministic in ``seed``."""
    B, Z, Y = make_emotion_dataset(n_samples, seed, noise)
    nets = []
    for s in range(5):
        net = init_random(20, n_rules, rng_seed=seed * 101 + s)
        X = np.hstack([(B[:, s:s + 1] - 1.0) / 4.0, Z])
        nets.append(train_sequential(net, (X, Y[:, s])))
    rng = np.random.default_rng(seed + 7919)
    S = rng.uniform(1.0, 5.0, size=(n_samples, 5))
    inet = init_random(5, n_rules, rng_seed=seed * 101 + 5)
    train_sequential(inet, ((S - 1.0) / 4.0, synthetic_impairment(S)))
    return EmotionAssessor(nets), ImpairmentAssessor(inet, severe_threshold=severe_threshold)


@lru_cache(maxsize=4)
def default_assessors(seed: int = 0):
    """Cached trained assessors used by the simulator when none are given."""
    return train_assessors(seed)


def save_assessors(emotion: EmotionAssessor, impair: ImpairmentAssessor, path) -> None:
    Path(path).write_text(json.dumps({"emotion": emotion.to_dict(),
                                      "impairment": impair.to_dict()}))


def load_assessors(path):
    d = json.loads(Path(path).read_text())
    return EmotionAssessor.from_dict(d["emotion"]), ImpairmentAssessor.from_dict(d["impairment"])

