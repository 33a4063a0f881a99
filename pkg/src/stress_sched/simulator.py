"""Discrete-event evaluation of a staff schedule.

Requests arrive as a piecewise-homogeneous Poisson stream per job type,
queue FIFO, are served by the longest-idle on-duty employee and abandon
the queue minute by minute. Employees' emotions are re-assessed every
hour, which re-shapes their performance curves.

All randomness (arrival times, per-minute abandonment draws) depends only on
the instance and the seed, never on the schedule, so two schedules evaluated
under the same seed see identical customers.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from ._io import atomic_write_text, load_defaults
from .instance import Instance, JobType, validate
from .nfn import (DYNAMIC_FACTORS, FACTOR_NAMES, FACTOR_RANGES, EmotionAssessor,
                  ImpairmentAssessor, default_assessors, normalize_factors)
from .perf_model import curve_parameters, rise_center

log = logging.getLogger(__name__)

REST = -1
MINUTES_PER_DAY = 1440


class DimensionError(ValueError):
    pass


@dataclass
class Schedule:
    """Assignment codes ``assign[i, d, h]``: REST or the job-type code 2*j + l."""

    assign: np.ndarray

    def __post_init__(self):
        self.assign = np.asarray(self.assign, dtype=np.int8)
        if self.assign.ndim != 3 or self.assign.shape[2] != 24:
            raise DimensionError(f"schedule must have shape (m, D, 24), got {self.assign.shape}")

    @classmethod
    def empty(cls, m: int, days: int) -> "Schedule":
        return cls(np.full((m, days, 24), REST, dtype=np.int8))

    @property
    def m(self) -> int:
        return self.assign.shape[0]

    @property
    def days(self) -> int:
        return self.assign.shape[1]

    def set(self, i: int, d: int, h: int, job: JobType | None) -> None:
        self.assign[i, d, h] = REST if job is None else job.code

    def hours_per_day(self) -> np.ndarray:
        return (self.assign >= 0).sum(axis=2)

    def copy(self) -> "Schedule":
        return Schedule(self.assign.copy())

    def to_dict(self) -> dict:
        return {"m": self.m, "days": self.days, "assign": self.assign.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(np.array(d["assign"], dtype=np.int8))

    def __eq__(self, other):
        return isinstance(other, Schedule) and np.array_equal(self.assign, other.assign)


def _as_array(sched) -> np.ndarray:
    return sched.assign if isinstance(sched, Schedule) else np.asarray(sched, dtype=np.int8)


# --------------------------------------------------------------------------- #
# static constraints

def check_constraints(ins: Instance, sched) -> list[dict]:
    """Daily- and monthly-hour cap violations; per-hour exclusivity holds by encoding."""
    a = _as_array(sched)
    _check_dims(ins, a)
    hours = (a >= 0).sum(axis=2)
    out = [{"constraint": "daily", "employee": int(i), "day": int(d), "hours": int(hours[i, d])}
           for i, d in np.argwhere(hours > ins.globals.daily_cap)]
    for i, d, tot in _monthly_excess(hours, ins.globals.monthly_cap):
        out.append({"constraint": "monthly", "employee": i, "day": d, "hours": tot})
    return out


def monthly_windows(days: int):
    """Start days of the 31-day windows (a single truncated window if D <= 31)."""
    return range(max(1, days - 30))


def _monthly_excess(hours, cap):
    D = hours.shape[1]
    csum = np.concatenate([np.zeros((hours.shape[0], 1), dtype=np.int64),
                           np.cumsum(hours, axis=1)], axis=1)
    out = []
    for d in monthly_windows(D):
        tot = csum[:, min(D, d + 31)] - csum[:, d]
        for i in np.flatnonzero(tot > cap):
            out.append((int(i), int(d), int(tot[i])))
    return out


def _check_dims(ins: Instance, a: np.ndarray) -> None:
    if a.shape != (ins.m, ins.horizon_days, 24):
        raise DimensionError(
            f"schedule shape {a.shape} does not match instance {(ins.m, ins.horizon_days, 24)}")
    if a.min(initial=0) < REST or a.max(initial=-1) >= ins.n_types:
        raise DimensionError("schedule contains job-type codes outside the instance")


# --------------------------------------------------------------------------- #
# random streams

@dataclass
class RequestStream:
    time: np.ndarray        # arrival minute (sorted)
    type: np.ndarray        # job-type code
    cancel: np.ndarray      # absolute minute of abandonment if still waiting
    slot: np.ndarray        # global hour index of arrival
    type_ptr: np.ndarray
    type_list: np.ndarray
    day_first: np.ndarray

    @property
    def size(self) -> int:
        return self.time.size


def _arrivals(rates_kdh: np.ndarray, rng) -> np.ndarray:
    D = rates_kdh.shape[0]
    out = []
    for d in range(D):
        for h in range(24):
            lam = rates_kdh[d, h]
            if lam <= 0:
                continue
            t0 = (d * 24 + h) * 60.0
            scale = 60.0 / lam
            gaps = rng.exponential(scale, size=int(lam * 1.3) + 10)
            c = t0 + np.cumsum(gaps)
            while c[-1] < t0 + 60.0:
                more = c[-1] + np.cumsum(rng.exponential(scale, size=int(lam) + 10))
                c = np.concatenate([c, more])
            out.append(c[c < t0 + 60.0])
    return np.concatenate(out) if out else np.zeros(0)


def cancel_waits(n: int, eps: float, rng, block: int = 32) -> np.ndarray:
    """Whole waiting minutes until abandonment, one Bernoulli draw per minute.

    At waiting minute ``t`` the customer leaves with probability 1 - exp(-eps t).
    """
    out = np.full(n, np.inf)
    todo = np.arange(n)
    k0 = 0
    limit = 10 * MINUTES_PER_DAY * 400
    while todo.size and k0 < limit:
        ks = np.arange(k0 + 1, k0 + block + 1)
        p = 1.0 - np.exp(-eps * ks)
        hit = rng.random((todo.size, block)) < p
        any_hit = hit.any(axis=1)
        out[todo[any_hit]] = ks[hit[any_hit].argmax(axis=1)]
        todo = todo[~any_hit]
        k0 += block
    return out


def build_stream(ins: Instance, seed: int) -> RequestStream:
    rates = ins.rates_by_type()
    eps = ins.type_array("cancel_coeff")
    times, types, cancels = [], [], []
    for k in range(ins.n_types):
        t = _arrivals(rates[k], np.random.default_rng([seed, 1, k]))
        w = cancel_waits(t.size, eps[k], np.random.default_rng([seed, 2, k]))
        times.append(t)
        types.append(np.full(t.size, k, dtype=np.int64))
        cancels.append(t + w)
    time = np.concatenate(times)
    typ = np.concatenate(types)
    canc = np.concatenate(cancels)
    order = np.lexsort((typ, time))
    time, typ, canc = time[order], typ[order], canc[order]
    slot = np.minimum((time // 60.0).astype(np.int64), ins.horizon_days * 24 - 1)
    type_list = np.argsort(typ, kind="stable").astype(np.int64)
    type_ptr = np.zeros(ins.n_types + 1, dtype=np.int64)
    type_ptr[1:] = np.cumsum(np.bincount(typ, minlength=ins.n_types))
    day_first = np.searchsorted(time, np.arange(ins.horizon_days + 1) * float(MINUTES_PER_DAY))
    return RequestStream(time, typ, canc, slot, type_ptr, type_list, day_first.astype(np.int64))


# --------------------------------------------------------------------------- #
# outcomes

@dataclass
class SimOutcome:
    n: np.ndarray                # (N, 2, 24, D) arrivals
    n_delay: np.ndarray
    n_cancel: np.ndarray
    n_served: np.ndarray
    n_in_service: np.ndarray     # still being served at the horizon end
    f_delay: float
    f_cancel: float
    f: float
    constraint_violations: list = field(default_factory=list)
    carried_queue_size: int = 0
    curve_derivations: int = 0

    def summary(self) -> dict:
        return {"f": self.f, "f_delay": self.f_delay, "f_cancel": self.f_cancel,
                "arrivals": int(self.n.sum()), "served": int(self.n_served.sum()),
                "canceled": int(self.n_cancel.sum()), "delayed": int(self.n_delay.sum()),
                "in_service_at_end": int(self.n_in_service.sum()),
                "carried_queue_size": self.carried_queue_size,
                "violations": self.constraint_violations}


@dataclass
class RunState:
    """Raw result of one kernel run, plus optional day-start snapshots."""

    f: float
    counts: np.ndarray          # (4, K, D*24)
    impaired_at: np.ndarray
    stats: np.ndarray
    snaps: tuple | None = None


class Evaluator:
    """Reusable fitness oracle for one instance, seed and model variant.

    ``constant_performance=True`` freezes every employee at the initial value
    pf(0) of their curve, ignoring emotional dynamics and impairment.
    """

    def __init__(self, ins: Instance, emotion: EmotionAssessor | None = None,
                 impair: ImpairmentAssessor | None = None, seed: int = 0,
                 service_time_mode: str | None = None, constant_performance: bool = False):
        problems = validate(ins)
        if problems:
            raise ValueError("invalid instance: " + "; ".join(problems[:5]))
        if emotion is None or impair is None:
            de, di = default_assessors()
            emotion = emotion or de
            impair = impair or di
        cfg = load_defaults()["simulator"]
        mode = service_time_mode or cfg["service_time_mode"]
        if mode not in ("divide", "multiply"):
            raise ValueError(f"unknown service_time_mode {mode!r}")
        if mode == "multiply":
            log.warning("service_time_mode='multiply': higher performance means slower service")
        self.ins = ins
        self.seed = seed
        self.constant_performance = constant_performance
        self.service_mode = 0 if mode == "divide" else 1
        self.cap_factor = float(cfg["service_cap_factor"])
        self.calls = 0
        self.stream = build_stream(ins, seed)
        self._prepare(emotion, impair)
        w = ins.type_array("weight")
        self._w_delay = w
        self._w_cancel = w * ins.globals.cancel_weight

    def _prepare(self, emotion, impair):
        ins = self.ins
        K, m = ins.n_types, ins.m
        self.dtau = ins.type_array("mean_service_time")
        self.thr = ins.type_array("wait_threshold")
        self.cls = np.array([k % 2 for k in range(K)], dtype=np.int64)
        self.skills = ins.skill_matrix()
        self.base = np.array([[b.t_rise, b.t_peak, b.t_fall] for b in ins.globals.curve_baselines])

        raw = np.array([e.factors.as_array() for e in ins.employees])
        dyn_idx = [FACTOR_NAMES.index(n) for n in DYNAMIC_FACTORS]
        raw[:, FACTOR_NAMES.index("t_day")] = 0.0
        raw[:, FACTOR_NAMES.index("t_day_hard")] = 0.0
        self.dyn_init = np.ascontiguousarray(raw[:, dyn_idx])
        self.dyn_lo = np.array([FACTOR_RANGES[n][0] for n in DYNAMIC_FACTORS])
        self.dyn_hi = np.array([FACTOR_RANGES[n][1] for n in DYNAMIC_FACTORS])
        z = normalize_factors(raw)
        baselines = np.array([e.baseline_emotions.as_array() for e in ins.employees])

        # split every emotion network into a per-employee static part and a dynamic part
        cols_dyn = np.array([1 + j for j in dyn_idx])
        cols_st = np.array([c for c in range(20) if c not in set(cols_dyn)])
        R = emotion.nets[0].n_rules
        st_expo = np.zeros((m, 5, R))
        st_lin = np.zeros((m, 5, R))
        c_dyn = np.zeros((5, R, 11))
        inv_dyn = np.zeros((5, R, 11))
        k_dyn = np.zeros((5, R, 11))
        for s, net in enumerate(emotion.nets):
            X = np.hstack([(baselines[:, s:s + 1] - 1.0) / 4.0, z])            # (m, 20)
            inv = 0.5 / net.spreads ** 2
            dx = X[:, None, cols_st] - net.centers[None][:, :, cols_st]
            st_expo[:, s, :] = (dx * dx * inv[None][:, :, cols_st]).sum(axis=2)
            st_lin[:, s, :] = net.coef[:, 0][None] + X[:, cols_st] @ net.coef[:, 1 + cols_st].T
            c_dyn[s] = net.centers[:, cols_dyn]
            inv_dyn[s] = inv[:, cols_dyn]
            k_dyn[s] = net.coef[:, 1 + cols_dyn]
        self.st_expo, self.st_lin = st_expo, st_lin
        self.c_dyn, self.inv_dyn, self.k_dyn = c_dyn, inv_dyn, k_dyn
        self.ic = impair.net.centers.copy()
        self.iinv = 0.5 / impair.net.spreads ** 2
        self.icoef = impair.net.coef.copy()
        self.severe = float(impair.severe_threshold)

        states = emotion.assess_array(baselines, z)
        self.initial_states = states
        u, q, s1, w, s2 = curve_parameters(
            self.skills, *(states[:, j:j + 1] for j in range(5)),
            self.base[self.cls, 0][None], self.base[self.cls, 1][None], self.base[self.cls, 2][None])
        u, q, s1, w, s2 = np.broadcast_arrays(u, np.minimum(q, 1.0), s1, w, s2)
        mu = np.vectorize(rise_center)(s1, q)
        self.curves0 = np.ascontiguousarray(np.stack([u, q, s1, w, s2, mu], axis=2))

    # ------------------------------------------------------------------ #
    def initial_performance(self) -> np.ndarray:
        """(m, n_types) pf(0) = Q*U at the horizon start."""
        return self.curves0[:, :, 0] * self.curves0[:, :, 1]

    def fitness_of(self, counts: np.ndarray):
        fd = float(self._w_delay @ counts[_kernel.DELAY].sum(axis=1))
        fc = float(self._w_cancel @ counts[_kernel.CANCEL].sum(axis=1))
        return fd + fc, fd, fc / self.ins.globals.cancel_weight

    def run(self, sched, record: bool = False, base: RunState | None = None,
            from_day: int = 0, trace_rows: int = 0) -> RunState:
        """One simulator call. With ``base`` and ``from_day`` the run resumes from
        ``base``'s snapshot at the start of ``from_day`` (days before it must be
        identical in both schedules)."""
        a = np.ascontiguousarray(_as_array(sched))
        _check_dims(self.ins, a)
        ins, st = self.ins, self.stream
        m, D, K = ins.m, ins.horizon_days, ins.n_types
        if base is not None and from_day > 0:
            if base.snaps is None:
                raise ValueError("base run carries no snapshots")
            sb, si, sh, stl, sc = base.snaps
            busy, imp = sb[from_day].copy(), si[from_day].copy()
            head, tail, counts = sh[from_day].copy(), stl[from_day].copy(), sc[from_day].copy()
        else:
            from_day = 0
            busy = np.full(m, -_kernel.INF)
            imp = np.full(m, -1, dtype=np.int64)
            head = np.zeros(K, dtype=np.int64)
            tail = np.zeros(K, dtype=np.int64)
            counts = np.zeros((4, K, D * 24), dtype=np.int64)
        if record:
            snaps = (np.zeros((D, m)), np.zeros((D, m), dtype=np.int64),
                     np.zeros((D, K), dtype=np.int64), np.zeros((D, K), dtype=np.int64),
                     np.zeros((D, 4, K, D * 24), dtype=np.int64))
            if base is not None and from_day > 0:
                for arr, src in zip(snaps, base.snaps):
                    arr[:from_day] = src[:from_day]
        else:
            snaps = (np.zeros((1, 1)), np.zeros((1, 1), dtype=np.int64),
                     np.zeros((1, 1), dtype=np.int64), np.zeros((1, 1), dtype=np.int64),
                     np.zeros((1, 1, 1, 1), dtype=np.int64))
        stats = np.zeros(3, dtype=np.int64)
        trace = np.zeros((max(trace_rows, 1), 5))
        _kernel.simulate_kernel(
            a, st.time, st.type, st.cancel, st.slot, st.type_ptr, st.type_list, st.day_first,
            self.dtau, self.thr, self.cls, self.skills, self.base, self.curves0,
            self.st_expo, self.st_lin, self.c_dyn, self.inv_dyn, self.k_dyn,
            self.dyn_lo, self.dyn_hi, self.dyn_init, self.ic, self.iinv, self.icoef, self.severe,
            1 if self.constant_performance else 0, self.service_mode, self.cap_factor, from_day,
            busy, imp, head, tail, counts, record, *snaps, stats, trace)
        self.calls += 1
        f = self.fitness_of(counts)[0]
        state = RunState(f, counts, imp, stats, snaps if record else None)
        if trace_rows:
            state.trace = trace[: stats[1]]
        return state

    def fitness(self, sched) -> float:
        return self.run(sched).f

    def outcome(self, state: RunState) -> SimOutcome:
        ins = self.ins
        N, D = ins.n_categories, ins.horizon_days

        def to_grid(x):   # (K, D*24) -> (N, 2, 24, D)
            return x.reshape(N, 2, D, 24).transpose(0, 1, 3, 2).copy()

        n = np.zeros((ins.n_types, D * 24), dtype=np.int64)
        np.add.at(n, (self.stream.type, self.stream.slot), 1)
        f, fd, fc = self.fitness_of(state.counts)
        viol = [{"constraint": "impairment", "employee": int(i), "day": int(H // 24),
                 "hour": int(H % 24)} for i, H in enumerate(state.impaired_at) if H >= 0]
        c = state.counts
        return SimOutcome(to_grid(n), to_grid(c[_kernel.DELAY]), to_grid(c[_kernel.CANCEL]),
                          to_grid(c[_kernel.SERVED]), to_grid(c[_kernel.IN_SERVICE]),
                          fd, fc, f, viol, int(state.stats[2]), int(state.stats[0]))


def simulate(ins: Instance, sched, emotion: EmotionAssessor | None = None,
             impair: ImpairmentAssessor | None = None, seed: int = 0,
             service_time_mode: str | None = None, constant_performance: bool = False,
             trace_path=None) -> SimOutcome:
    """Simulate ``sched`` on ``ins`` and return the counts and objective."""
    ev = Evaluator(ins, emotion, impair, seed, service_time_mode, constant_performance)
    rows = 4 * ev.stream.size + 16 if trace_path is not None else 0
    state = ev.run(sched, trace_rows=rows)
    if trace_path is not None:
        write_trace(trace_path, state.trace, ins)
    return ev.outcome(state)


_EVENTS = ("arrive", "start", "complete", "cancel")


def write_trace(path, trace: np.ndarray, ins: Instance) -> None:
    order = np.lexsort((trace[:, 1], trace[:, 0]))
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["time_min", "event", "employee_id", "category", "class", "wait_min"])
    for t, ev, emp, k, wait in trace[order]:
        emp_id = ins.employees[int(emp)].id if emp >= 0 else ""
        w.writerow([f"{t:.4f}", _EVENTS[int(ev)], emp_id, int(k) // 2 + 1,
                    "easy" if int(k) % 2 == 0 else "hard", f"{wait:.4f}"])
    atomic_write_text(path, buf.getvalue())
