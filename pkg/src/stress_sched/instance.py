"""Problem instances: data model, validation, JSON I/O and a synthetic generator."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, load_defaults
from .nfn import StressFactors, default_assessors, normalize_factors
from .perf_model import STATE_NAMES, CurveBaselines, EmotionalState

SCHEMA_VERSION = 1
CLASS_NAMES = ("easy", "hard")


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed into a valid instance."""


@dataclass(frozen=True)
class JobType:
    category: int   # 0-based
    cls: int        # 0 easy, 1 hard

    @property
    def code(self) -> int:
        return 2 * self.category + self.cls

    @classmethod
    def from_code(cls, code: int) -> "JobType":
        return cls(int(code) // 2, int(code) % 2)


@dataclass(frozen=True)
class JobParams:
    mean_service_time: float   # minutes
    weight: float
    wait_threshold: float      # minutes
    cancel_coeff: float        # per minute

    def to_dict(self) -> dict:
        return {"mean_service_time": self.mean_service_time, "weight": self.weight,
                "wait_threshold": self.wait_threshold, "cancel_coeff": self.cancel_coeff}


@dataclass
class EmployeeProfile:
    id: str
    skills: np.ndarray                    # (N, 2) in [0, 1]
    factors: StressFactors
    baseline_emotions: EmotionalState

    def __post_init__(self):
        self.skills = np.asarray(self.skills, dtype=float)

    def to_dict(self) -> dict:
        return {"id": self.id, "skills": self.skills.tolist(),
                "factors": self.factors.to_dict(),
                "baseline_emotions": self.baseline_emotions.to_dict()}


@dataclass
class Globals:
    daily_cap: float = 10.0          # hours
    monthly_cap: float = 212.0       # hours per 31-day window
    cancel_weight: float = 2.0
    avg_daily_hours: float = 8.0
    curve_baselines: tuple = (CurveBaselines(45.0, 24.0, 72.0), CurveBaselines(25.0, 18.0, 36.0))

    def to_dict(self) -> dict:
        return {"daily_cap_hours": self.daily_cap, "monthly_cap_hours": self.monthly_cap,
                "cancel_weight": self.cancel_weight, "avg_daily_hours": self.avg_daily_hours,
                "curve_baselines": {name: {"t_rise": b.t_rise, "t_peak": b.t_peak, "t_fall": b.t_fall}
                                    for name, b in zip(CLASS_NAMES, self.curve_baselines)}}


@dataclass(eq=False)
class Instance:
    n_categories: int
    horizon_days: int
    arrival_rates: np.ndarray              # (N, 2, 24, D) requests per hour
    job_params: list                       # N x 2 nested list of JobParams
    employees: list
    globals: Globals = field(default_factory=Globals)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.arrival_rates = np.asarray(self.arrival_rates, dtype=float)

    @property
    def m(self) -> int:
        return len(self.employees)

    @property
    def n_types(self) -> int:
        return 2 * self.n_categories

    def job(self, code: int) -> JobParams:
        return self.job_params[code // 2][code % 2]

    def type_array(self, attr: str) -> np.ndarray:
        """Per job-type code vector of one JobParams attribute."""
        return np.array([getattr(self.job(k), attr) for k in range(self.n_types)], dtype=float)

    def rates_by_type(self) -> np.ndarray:
        """Arrival rates reshaped to (type code, day, hour)."""
        r = self.arrival_rates.reshape(self.n_types, 24, self.horizon_days)
        return np.ascontiguousarray(r.transpose(0, 2, 1))

    def skill_matrix(self) -> np.ndarray:
        """(m, n_types) skills indexed by type code."""
        return np.array([e.skills.reshape(-1) for e in self.employees])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "meta": {**self.meta, "m": self.m, "n_categories": self.n_categories,
                     "horizon_days": self.horizon_days},
            "globals": self.globals.to_dict(),
            "job_params": [[jp.to_dict() for jp in row] for row in self.job_params],
            "arrival_rates": self.arrival_rates.tolist(),
            "employees": [e.to_dict() for e in self.employees],
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# --------------------------------------------------------------------------- #
# validation

def validate(ins: Instance) -> list[str]:
    """All invariant violations, each naming the field and the reason."""
    out: list[str] = []
    N, D = ins.n_categories, ins.horizon_days
    if N < 1:
        out.append("n_categories must be at least 1")
    if D < 1:
        out.append("horizon_days must be at least 1")
    if ins.arrival_rates.shape != (N, 2, 24, D):
        out.append(f"arrival_rates has shape {ins.arrival_rates.shape}, expected {(N, 2, 24, D)}")
    else:
        bad = np.argwhere(~(ins.arrival_rates >= 0))
        for j, l, h, d in bad[:20]:
            out.append(f"arrival_rates[{j}][{l}][{h}][{d}] must be non-negative and finite")
        if len(bad) > 20:
            out.append(f"arrival_rates: {len(bad) - 20} further negative entries")
    if len(ins.job_params) != N or any(len(row) != 2 for row in ins.job_params):
        out.append("job_params must be an N x 2 table")
    else:
        for j, row in enumerate(ins.job_params):
            for l, jp in enumerate(row):
                for name, val in jp.to_dict().items():
                    if not val > 0:
                        out.append(f"job_params[{j}][{l}].{name} must be positive")
    g = ins.globals
    if not g.cancel_weight > 1:
        out.append("cancel_weight must exceed 1")
    if not 0 < g.daily_cap <= 24:
        out.append("daily_cap must lie in (0, 24]")
    if not g.monthly_cap > 0:
        out.append("monthly_cap must be positive")
    if not g.avg_daily_hours > 0:
        out.append("avg_daily_hours must be positive")
    if ins.m < 1:
        out.append("employees must not be empty")
    seen = set()
    for i, e in enumerate(ins.employees):
        if e.id in seen:
            out.append(f"employees[{i}].id {e.id!r} is duplicated")
        seen.add(e.id)
        if e.skills.shape != (N, 2):
            out.append(f"employees[{i}].skills has shape {e.skills.shape}, expected {(N, 2)}")
        elif np.any((e.skills < 0) | (e.skills > 1)):
            out.append(f"employees[{i}].skills must lie in [0, 1]")
        out.extend(f"employees[{i}].factors: {v}" for v in e.factors.violations())
    return out


# --------------------------------------------------------------------------- #
# JSON I/O

_TOP_KEYS = {"schema_version", "meta", "globals", "job_params", "arrival_rates", "employees"}


def _warn_extra(obj: dict, allowed, where: str) -> None:
    for k in obj:
        if k not in allowed:
            warnings.warn(f"ignoring unknown field {where}{k!r}", stacklevel=3)


def from_dict(d: dict) -> Instance:
    if not isinstance(d, dict):
        raise InstanceFormatError("instance document must be a JSON object")
    missing = _TOP_KEYS - d.keys()
    if missing:
        raise InstanceFormatError(f"missing top-level field(s): {sorted(missing)}")
    if d["schema_version"] != SCHEMA_VERSION:
        raise InstanceFormatError(
            f"schema_version {d['schema_version']!r} not supported (expected {SCHEMA_VERSION})")
    _warn_extra(d, _TOP_KEYS, "")
    try:
        meta = dict(d["meta"])
        N = int(meta.pop("n_categories"))
        D = int(meta.pop("horizon_days"))
        meta.pop("m", None)
        gd = d["globals"]
        _warn_extra(gd, {"daily_cap_hours", "monthly_cap_hours", "cancel_weight",
                         "avg_daily_hours", "curve_baselines"}, "globals.")
        cb = gd["curve_baselines"]
        g = Globals(float(gd["daily_cap_hours"]), float(gd["monthly_cap_hours"]),
                    float(gd["cancel_weight"]), float(gd["avg_daily_hours"]),
                    tuple(CurveBaselines(float(cb[c]["t_rise"]), float(cb[c]["t_peak"]),
                                         float(cb[c]["t_fall"])) for c in CLASS_NAMES))
        job_params = [[JobParams(float(p["mean_service_time"]), float(p["weight"]),
                                 float(p["wait_threshold"]), float(p["cancel_coeff"]))
                       for p in row] for row in d["job_params"]]
        rates = np.array(d["arrival_rates"], dtype=float)
        employees = []
        for i, e in enumerate(d["employees"]):
            _warn_extra(e, {"id", "skills", "factors", "baseline_emotions"}, f"employees[{i}].")
            fac = {k: float(v) for k, v in e["factors"].items()
                   if k in StressFactors.__dataclass_fields__}
            be = e["baseline_emotions"]
            employees.append(EmployeeProfile(
                str(e["id"]), np.array(e["skills"], dtype=float), StressFactors(**fac),
                EmotionalState(*(float(be[n]) for n in STATE_NAMES))))
    except KeyError as exc:
        raise InstanceFormatError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"malformed field value: {exc}") from None
    ins = Instance(N, D, rates, job_params, employees, g, meta)
    problems = validate(ins)
    if problems:
        raise InstanceFormatError("invalid instance: " + "; ".join(problems[:5]))
    return ins


def save(ins: Instance, path) -> None:
    atomic_write_text(path, json.dumps(ins.to_dict()))


def load(path) -> Instance:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(d)


# --------------------------------------------------------------------------- #
# synthetic generator

def intraday_shape(active=(8, 20), peaks=(10, 15)) -> np.ndarray:
    """24-hour piecewise-constant profile with two peaks, mean 1 over active hours."""
    h = np.arange(24) + 0.5
    s = 0.6 + np.exp(-0.5 * ((h - peaks[0] - 0.5) / 1.5) ** 2) \
        + 0.8 * np.exp(-0.5 * ((h - peaks[1] - 0.5) / 1.5) ** 2)
    s[: active[0]] = 0.0
    s[active[1]:] = 0.0
    return s / s[active[0]:active[1]].mean()


def _pair(v) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    return np.repeat(a, 2) if a.size == 1 else a[:2]


def generate(spec: dict, assessors=None) -> Instance:
    """Synthetic instance calibrated to hourly arrival rates and initial performance.

    ``spec`` keys: m, N, D, mean_easy_rate, mean_hard_rate, mean_init_perf,
    mean_cancel_coeff (scalars or (easy, hard) pairs), seed. Rates are
    per-class totals across categories, averaged over active hours.
    """
    try:
        m, N, D = int(spec["m"]), int(spec["N"]), int(spec["D"])
        rates = np.array([spec["mean_easy_rate"], spec["mean_hard_rate"]], dtype=float)
        init_perf = _pair(spec.get("mean_init_perf", 0.75))
        cancel = _pair(spec.get("mean_cancel_coeff", 0.2))
        seed = int(spec.get("seed", 0))
    except KeyError as exc:
        raise ValueError(f"generator spec is missing {exc.args[0]!r}") from None
    if D < 1:
        raise ValueError(f"infeasible spec: D must be at least 1 (got {D})")
    if m < 1 or N < 1:
        raise ValueError("infeasible spec: m and N must be at least 1")
    if np.any(rates <= 0) or np.any(init_perf <= 0) or np.any(cancel <= 0):
        raise ValueError("infeasible spec: all means must be positive")
    if np.any(init_perf > 1):
        raise ValueError("infeasible spec: mean_init_perf cannot exceed 1")

    cfg = load_defaults()
    rng = np.random.default_rng(seed)
    active = tuple(cfg["active_hours"])

    # arrival rates (N, 2, 24, D)
    shape = intraday_shape(active, tuple(cfg["intraday_peaks"]))
    share = rng.dirichlet(np.full(N, 4.0), size=2).T                 # (N, 2)
    day = rng.uniform(0.9, 1.1, size=D)
    jitter = rng.uniform(0.9, 1.1, size=(N, 2, 24, D))
    lam = share[:, :, None, None] * shape[None, None, :, None] * day * jitter
    act = slice(*active)
    for l in range(2):
        mean_total = lam[:, l, act, :].sum(axis=0).mean()
        lam[:, l] *= rates[l] / mean_total

    # job parameters
    jd = cfg["job_defaults"]
    eps = cancel[None, :] * rng.uniform(0.9, 1.1, size=(N, 2))
    eps *= cancel[None, :] / eps.mean(axis=0, keepdims=True)
    job_params = [[JobParams(jd[c]["mean_service_time"], jd[c]["weight"],
                             jd[c]["wait_threshold"], float(eps[j, l]))
                   for l, c in enumerate(CLASS_NAMES)] for j in range(N)]

    # employees
    factors = []
    for _ in range(m):
        tw = rng.uniform(25.0, 40.0)
        tm = min(260.0, tw * 30.0 / 7.0 * rng.uniform(0.95, 1.05))
        ts = min(780.0, tm * 3.0 * rng.uniform(0.95, 1.05))
        hf = rng.uniform(0.2, 0.5)
        dc = float(rng.integers(0, 6))
        dm = float(np.clip(round(tm / 8.0), dc, 30))
        ds = float(np.clip(round(ts / 8.0), dm, 90))
        factors.append(StressFactors(
            age=rng.uniform(22, 55), gender=float(rng.integers(0, 2)), bmi=rng.uniform(18, 30),
            commuting_hours=rng.uniform(0.2, 2.0), sleeping_hours=rng.uniform(6.5, 8.5),
            pit=rng.uniform(0, 3000), pit_sad=rng.uniform(0, 2000), yoe=rng.uniform(0, 20),
            d_cont=dc, d_month=dm, d_season=ds, t_day=0.0, t_week=tw, t_month=tm, t_season=ts,
            t_day_hard=0.0, t_week_hard=tw * hf, t_month_hard=tm * hf, t_season_hard=ts * hf))
    # induction-test grades of a workforce in good shape at the horizon start
    lo, hi = np.array([1, 4, 1, 3, 3]), np.array([2, 5, 3, 5, 5])
    baselines = rng.integers(lo, hi + 1, size=(m, 5)).astype(float)

    emotion, _ = assessors if assessors is not None else default_assessors()
    states = emotion.assess_array(baselines, normalize_factors([f.as_array() for f in factors]))
    # pf(0) = Q * U = sqrt(act/6) * skill * (6 - dep)/5
    gain = np.sqrt(states[:, 1] / 6.0) * (6.0 - states[:, 0]) / 5.0       # (m,)
    noise = rng.uniform(0.85, 1.15, size=(m, N, 2))
    skills = np.empty((m, N, 2))
    for l in range(2):
        s = np.clip(init_perf[l] / gain[:, None] * noise[:, :, l], 0.05, 1.0)
        for _ in range(5):
            s = np.clip(s * init_perf[l] / (s * gain[:, None]).mean(), 0.05, 1.0)
        skills[:, :, l] = s

    employees = [EmployeeProfile(f"E{i + 1:03d}", skills[i], factors[i],
                                 EmotionalState.from_array(baselines[i])) for i in range(m)]
    g = Globals(cfg["daily_cap_hours"], cfg["monthly_cap_hours"], cfg["cancel_weight"],
                cfg["avg_daily_hours"],
                tuple(CurveBaselines(**cfg["curve_baselines"][c]) for c in CLASS_NAMES))
    achieved = [(skills[:, :, l] * gain[:, None]).mean() for l in range(2)]
    meta = {"generator": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                          for k, v in spec.items()},
            "achieved_init_perf": [round(float(x), 4) for x in achieved]}
    return Instance(N, D, lam, job_params, employees, g, meta)


def named_spec(name: str) -> dict:
    """Generator spec for a named preset ('desk', 'bank1'..'bank5')."""
    return dict(load_defaults()["instances"][name])


def desk_instance(seed: int = 0) -> Instance:
    """The small 20-employee, 2-category, 7-day instance used throughout the tests."""
    spec = named_spec("desk")
    spec["seed"] = seed
    return generate(spec)
