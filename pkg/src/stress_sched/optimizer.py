"""Memetic schedule optimizer.

A population of rosters is perturbed at the long-term level (which days each
employee works), refined at the short-term level (which job each hour) by
local search whose operator is chosen by an agent, and repaired whenever a
working-time cap or an impairment is hit.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernel
from ._io import atomic_write_text, load_defaults
from .dqn_agent import N_OPS, Agent, Transition, agent_state
from .instance import Instance
from .simulator import REST, Evaluator, RunState, Schedule, check_constraints, monthly_windows

log = logging.getLogger(__name__)

EPS = 1e-9
_LS4_ORIGIN_LIMIT = 15


@dataclass
class RunConfig:
    pop_max: int = 60
    pop_min: int = 10
    ns_min: int = 10
    ns_max: int = 45
    alpha: float = 1.0026
    lambda_init: float = 0.5
    eval_budget: int | None = None        # None means 600 * m
    gamma: float = 0.85
    seed: int = 0
    sim_seed: int | None = None           # arrivals and cancellations; None means ``seed``
    selector: str = "dqn"                 # "dqn" or "uniform"
    acceptance: str = "move"             # "best", "day" or "move"
    constant_performance: bool = False
    service_time_mode: str | None = None

    def __post_init__(self):
        if not 1 <= self.pop_min <= self.pop_max:
            raise ValueError("need 1 <= pop_min <= pop_max")
        if not 1 <= self.ns_min <= self.ns_max:
            raise ValueError("need 1 <= ns_min <= ns_max")
        if self.alpha <= 1.0:
            raise ValueError("alpha must exceed 1")
        if not 0.0 < self.lambda_init <= 0.5:
            raise ValueError("lambda_init must lie in (0, 0.5]")
        if self.acceptance not in ("best", "day", "move"):
            raise ValueError(f"unknown acceptance rule {self.acceptance!r}")
        if self.selector not in ("dqn", "uniform"):
            raise ValueError(f"unknown selector {self.selector!r}")

    @classmethod
    def from_defaults(cls, **overrides) -> "RunConfig":
        d = load_defaults()["optimizer"]
        base = {k: d[k] for k in ("pop_max", "pop_min", "ns_min", "ns_max", "alpha",
                                  "lambda_init", "gamma")}
        base.update(overrides)
        return cls(**base)

    @property
    def simulation_seed(self) -> int:
        return self.seed if self.sim_seed is None else self.sim_seed

    def budget(self, m: int) -> int:
        if self.eval_budget is not None:
            return self.eval_budget
        return load_defaults()["optimizer"]["evals_per_employee"] * m


@dataclass
class SolutionRecord:
    sched: Schedule
    f: float
    wavelength: float
    stagnation_age: int = 0
    last_delta: float = 0.0
    last_op: int = 0
    state: RunState | None = field(default=None, repr=False)


# --------------------------------------------------------------------------- #
# schedule formulas

def ns_budget(g: int, g_max: int, cfg: RunConfig | None = None) -> int:
    cfg = cfg or RunConfig()
    r = min(max(g / g_max, 0.0), 1.0) if g_max > 0 else 1.0
    return int(math.floor(cfg.ns_min + r * r * (cfg.ns_max - cfg.ns_min) + 1e-12))


def pop_size(g: int, g_max: int, cfg: RunConfig | None = None) -> int:
    cfg = cfg or RunConfig()
    r = min(max(g / g_max, 0.0), 1.0) if g_max > 0 else 1.0
    return int(math.ceil(cfg.pop_max - r * r * (cfg.pop_max - cfg.pop_min) - 1e-12))


def update_wavelength(pop, alpha: float = 1.0026) -> None:
    """Shrink each wavelength; the fitter the solution, the stronger the shrink."""
    fs = np.array([s.f for s in pop])
    fmax, fmin = fs.max(), fs.min()
    for s in pop:
        s.wavelength *= alpha ** (-(fmax - s.f + EPS) / (fmax - fmin + EPS))


# --------------------------------------------------------------------------- #
# roster bookkeeping shared by initialization, mutation, repair and search

def stint_profile(ev: Evaluator) -> np.ndarray:
    """(m, K, 24) initial-curve performance in the p-th hour of a stint, at mid-hour.

    Flat at pf(0) when the evaluator holds performance constant.
    """
    c = ev.curves0
    m, K = c.shape[:2]
    if ev.constant_performance:
        pf0 = np.maximum(ev.initial_performance(), 1.0 / ev.cap_factor)
        return np.repeat(pf0[:, :, None], 24, axis=2)
    out = np.empty((m, K, 24))
    for i in range(m):
        for k in range(K):
            for p in range(24):
                out[i, k, p] = _kernel.perf_value(c[i, k, 0], c[i, k, 1], c[i, k, 2], c[i, k, 3],
                                                  c[i, k, 4], c[i, k, 5], 60.0 * p + 30.0)
    return np.maximum(out, 1.0 / ev.cap_factor)


class _Roster:
    def __init__(self, ins: Instance, assign: np.ndarray, pf: np.ndarray, demand: np.ndarray,
                 profile: np.ndarray | None = None):
        self.ins = ins
        self.a = assign
        self.pf = pf
        self.profile = profile
        self.demand = demand                       # (K, D, 24) staff needed at pf = 1
        self.hours = (assign >= 0).sum(axis=2).astype(np.int64)
        self.daily_cap = int(math.floor(ins.globals.daily_cap + 1e-9))
        self.monthly_cap = int(math.floor(ins.globals.monthly_cap + 1e-9))
        self.D = assign.shape[1]
        self.n_windows = len(monthly_windows(self.D))
        K = ins.n_types
        self.cover = np.zeros((K, self.D, 24))
        i, d, h = np.nonzero(assign >= 0)
        np.add.at(self.cover, (assign[i, d, h], d, h), pf[i, assign[i, d, h]])

    def monthly_room(self, i: int, d: int) -> int:
        lo = max(0, d - 30)
        hi = min(d, self.n_windows - 1)
        row = self.hours[i]
        worst = max(int(row[w:w + 31].sum()) for w in range(lo, hi + 1))
        return self.monthly_cap - worst

    def room(self, i: int, d: int) -> int:
        return max(0, min(self.daily_cap - int(self.hours[i, d]), self.monthly_room(i, d)))

    def set(self, i, d, h, code) -> None:
        old = self.a[i, d, h]
        if old >= 0:
            self.cover[old, d, h] -= self.pf[i, old]
            self.hours[i, d] -= 1
        if code >= 0:
            self.cover[code, d, h] += self.pf[i, code]
            self.hours[i, d] += 1
        self.a[i, d, h] = code

    def deficit(self, k, d) -> np.ndarray:
        return self.demand[k, d] - self.cover[k, d]

    def place(self, i: int, d: int, k: int, n: int, rng=None) -> int:
        """Put ``n`` hours of job ``k`` on free hours of day ``d``.

        With ``rng`` the hours are drawn one at a time, at random, weighted by
        how much uncovered demand the employee would actually absorb there
        given where the hour falls in their stint (or by uncovered demand
        alone when no stint profile is known). Without ``rng`` a single
        stretch with the largest uncovered demand is used.
        """
        n = min(n, self.room(i, d))
        if n <= 0:
            return 0
        free = self.a[i, d] < 0
        deficit = self.deficit(k, d)
        if rng is not None and self.profile is not None:
            return self._place_by_gain(i, d, k, n, rng)
        if rng is not None:
            cand = np.flatnonzero(free & (self.demand[k, d] > 0))
            if cand.size == 0:
                return 0
            w = np.clip(deficit[cand], 0.0, None) + 0.05 * self.demand[k, d, cand]
            pick = rng.choice(cand, size=min(n, cand.size), replace=False, p=w / w.sum())
            for h in pick:
                self.set(i, d, int(h), k)
            return len(pick)
        best, start = -np.inf, -1
        for s in range(0, 25 - n):
            if free[s:s + n].all():
                v = deficit[s:s + n].sum()
                if v > best + 1e-12:
                    best, start = v, s
        if start >= 0:
            hours = range(start, start + n)
        else:
            cand = np.flatnonzero(free)
            hours = cand[np.argsort(-deficit[cand], kind="stable")][:n]
        for h in hours:
            self.set(i, d, int(h), k)
        return len(hours)

    def _place_by_gain(self, i, d, k, n, rng) -> int:
        allowed = self.demand[k, d] > 0
        hrs = np.arange(24)
        placed = 0
        for _ in range(n):
            val = np.clip(self.demand[:, d] - self.cover[:, d], 0.0, None) + 0.05 * self.demand[:, d]
            codes = self.a[i, d].astype(np.int64)
            own = np.where(codes >= 0, val[np.maximum(codes, 0), hrs], 0.0)
            gain = _kernel.hour_gains(codes, own, self.profile[i], k, val[k], allowed)
            gain = np.clip(gain, 0.0, None)
            tot = gain.sum()
            if tot <= 0:
                break
            self.set(i, d, int(rng.choice(24, p=gain / tot)), k)
            placed += 1
        return placed

    def release(self, i, d, h) -> int:
        code = int(self.a[i, d, h])
        self.set(i, d, h, REST)
        return code

    def rehome(self, d: int, h: int, k: int, exclude: int) -> int:
        """Give hour (d, h) of job ``k`` to a colleague; -1 when nobody can take it."""
        m = self.a.shape[0]
        best, key = -1, None
        for j in range(m):                         # same-day workers vacant that hour
            if j == exclude or self.hours[j, d] == 0 or self.a[j, d, h] >= 0:
                continue
            if self.room(j, d) > 0 and (key is None or self.hours[j, d] < key):
                best, key = j, self.hours[j, d]
        if best < 0:
            tot = self.hours.sum(axis=1)
            for j in range(m):                     # resting colleagues, least loaded overall
                if j == exclude or self.hours[j, d] > 0:
                    continue
                if self.room(j, d) > 0 and (key is None or tot[j] < key):
                    best, key = j, tot[j]
        if best >= 0:
            self.set(best, d, h, k)
        return best


def expected_demand(ins: Instance) -> np.ndarray:
    """(K, D, 24) busy servers needed at full performance: rate * service time / 60."""
    return ins.rates_by_type() * ins.type_array("mean_service_time")[:, None, None] / 60.0


def _balanced_hours(total: int, rooms, rng=None) -> list[int]:
    """Split ``total`` hours over employees with the given rooms so that the
    largest share is at most twice the smallest. With ``rng`` the split is
    random within that band, otherwise as even as possible."""
    n = len(rooms)
    total = max(total, n)
    if rng is not None:
        w = rng.uniform(1.0, 2.0, size=n)
        raw = total * w / w.sum()
        hrs = np.floor(raw).astype(int)
        for i in np.argsort(-(raw - hrs), kind="stable")[:total - hrs.sum()]:
            hrs[i] += 1
        hrs = [max(1, min(int(rooms[i]), int(hrs[i]))) for i in range(n)]
    else:
        base, extra = divmod(total, n)
        hrs = [max(1, min(rooms[i], base + (1 if i < extra else 0))) for i in range(n)]
    for _ in range(10 * n * 24):
        hi = max(range(n), key=lambda i: hrs[i])
        lo = min(range(n), key=lambda i: hrs[i])
        if hrs[hi] <= 2 * hrs[lo] or hrs[lo] >= rooms[lo]:
            break
        hrs[hi] -= 1
        hrs[lo] += 1
    return hrs


def base_headcount(tau_hours: float, avg_daily_hours: float) -> float:
    """Staff needed to cover ``tau_hours`` of work at average daily hours."""
    return tau_hours / avg_daily_hours


def init_solution(ins: Instance, seed: int = 0, perf: np.ndarray | None = None,
                  rng=None, profile: np.ndarray | None = None) -> Schedule:
    """Demand-driven starting roster.

    Each day, job types are staffed in order of decreasing weight. The head
    count is drawn around workload / average daily hours, employees come first
    from those performing above 0.5 with room left, then above 0.25, and hours
    are spread so nobody gets more than twice anyone else's share.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    if perf is None or profile is None:
        ev = Evaluator(ins, seed=seed)
        perf = ev.initial_performance() if perf is None else perf
        profile = stint_profile(ev) if profile is None else profile
    m, D, K = ins.m, ins.horizon_days, ins.n_types
    ro = _Roster(ins, np.full((m, D, 24), REST, dtype=np.int8), perf, expected_demand(ins),
                 profile)
    weights = ins.type_array("weight")
    dtau = ins.type_array("mean_service_time")
    rates = ins.rates_by_type()
    hbar = ins.globals.avg_daily_hours
    order = sorted(range(K), key=lambda k: (-weights[k], k))
    for d in range(D):
        for k in order:
            n_kd = rates[k, d].sum()
            if n_kd <= 0:
                continue
            tau = n_kd * dtau[k] / 60.0
            mbar = base_headcount(tau, hbar)
            mk = int(np.clip(round(rng.normal(mbar, math.sqrt(mbar) / 2.0)), 1, m))
            share = tau / mk
            rooms = np.array([ro.room(i, d) for i in range(m)])
            ok = rooms > 0
            t1 = np.flatnonzero(ok & (perf[:, k] > 0.5) & (ro.hours[:, d] + share <= hbar))
            t2 = np.flatnonzero(ok & (perf[:, k] > 0.25) & ~np.isin(np.arange(m), t1))
            chosen = list(rng.permutation(t1)) + list(rng.permutation(t2))
            chosen = chosen[:mk]
            if not chosen:
                continue
            # processing takes dtau / pf, so the chosen staff need tau / mean(pf) hours
            need = tau / max(float(np.mean(perf[chosen, k])), 1e-6)
            alloc = _balanced_hours(int(math.ceil(need)), [int(rooms[i]) for i in chosen], rng)
            for i, n in zip(chosen, alloc):
                ro.place(int(i), d, k, n, rng)
    return Schedule(ro.a)


# --------------------------------------------------------------------------- #
# repair

def repair(sched, ins: Instance, perf: np.ndarray | None = None,
           impaired: dict | None = None) -> tuple[Schedule, int]:
    """Release hours until the working-time caps hold, re-homing them if possible.

    ``impaired`` maps employee index -> global hour of severe impairment; such
    an employee also loses the hour before it and everything after.
    Returns the repaired schedule and the number of released hours.
    """
    a = (sched.assign if isinstance(sched, Schedule) else np.asarray(sched)).copy()
    if perf is None:
        perf = np.ones((ins.m, ins.n_types))
    ro = _Roster(ins, a, perf, expected_demand(ins))
    released = []
    for i, H in sorted((impaired or {}).items()):
        for g in range(max(0, H - 1), ins.horizon_days * 24):
            d, h = divmod(g, 24)
            if ro.a[i, d, h] >= 0:
                released.append((d, h, ro.release(i, d, h), i))
    for i in range(ins.m):
        released += _repair_employee(ro, i)
    for d, h, k, i in sorted(released):
        ro.rehome(d, h, k, exclude=i)
    return Schedule(ro.a), len(released)


def _repair_employee(ro: _Roster, i: int) -> list:
    out = []
    for d in range(ro.D):
        for h in range(23, -1, -1):
            if ro.hours[i, d] <= ro.daily_cap:
                break
            if ro.a[i, d, h] >= 0:
                out.append((d, h, ro.release(i, d, h), i))
    for w in monthly_windows(ro.D):
        end = min(ro.D, w + 31)
        g = end * 24 - 1
        while ro.hours[i, w:end].sum() > ro.monthly_cap and g >= w * 24:
            d, h = divmod(g, 24)
            if ro.a[i, d, h] >= 0:
                out.append((d, h, ro.release(i, d, h), i))
            g -= 1
    return out


# --------------------------------------------------------------------------- #
# long-term mutation

def _working_days(a):
    return (a >= 0).any(axis=2).sum(axis=1)


def _thirds(a):
    """(top two thirds, bottom two thirds) by working days; ties by index."""
    m = a.shape[0]
    wd = _working_days(a)
    order = sorted(range(m), key=lambda i: (-wd[i], i))
    n = int(math.ceil(2 * m / 3))
    return set(order[:n]), set(order[m - n:])


def _day_job(ro: _Roster, i: int, d: int) -> int:
    # job with the largest uncovered demand this employee handles reasonably
    best, val = -1, -np.inf
    for k in range(ro.ins.n_types):
        if ro.pf[i, k] <= 0.25:
            continue
        v = np.clip(ro.deficit(k, d), 0, None).sum() * ro.pf[i, k]
        if v > val:
            best, val = k, v
    return best


def _mut_drop_day(ro, i, rng, bottom):
    days = np.flatnonzero(ro.hours[i] > 0)
    d = int(rng.choice(days))
    cells = [(h, int(ro.a[i, d, h])) for h in range(24) if ro.a[i, d, h] >= 0]
    for h, _ in cells:
        ro.set(i, d, h, REST)
    recips = [j for j in rng.permutation(sorted(bottom)) if j != i]
    used = 0
    for j in recips:
        if not cells or used == 2:
            break
        took = []
        for h, k in cells:
            if ro.a[j, d, h] < 0 and ro.room(j, d) > 0:
                ro.set(j, d, h, k)
                took.append((h, k))
        if took:
            used += 1
            cells = [c for c in cells if c not in took]


def _mut_add_day(ro, i, rng):
    days = np.flatnonzero(ro.hours[i] == 0)
    d = int(rng.choice(days))
    k = _day_job(ro, i, d)
    if k < 0:
        return
    ro.place(i, d, k, int(round(ro.ins.globals.avg_daily_hours)), rng)


def _mut_swap_days(ro, i, rng):
    work = np.flatnonzero(ro.hours[i] > 0)
    rest = np.flatnonzero(ro.hours[i] == 0)
    d1, d2 = int(rng.choice(work)), int(rng.choice(rest))
    jobs = {}
    for h in range(24):
        k = int(ro.a[i, d1, h])
        if k >= 0:
            jobs[k] = jobs.get(k, 0) + 1
            ro.set(i, d1, h, REST)
    for k, n in sorted(jobs.items()):
        ro.place(i, d2, k, n, rng)


def _mut_exchange(ro, i, rng):
    m = ro.a.shape[0]
    work_i = ro.hours[i] > 0
    pairs = []
    for j in range(m):
        if j == i:
            continue
        work_j = ro.hours[j] > 0
        d1s = np.flatnonzero(work_i & ~work_j)
        d2s = np.flatnonzero(~work_i & work_j)
        if d1s.size and d2s.size:
            pairs.append((j, d1s, d2s))
    j, d1s, d2s = pairs[int(rng.integers(len(pairs)))]
    d1, d2 = int(rng.choice(d1s)), int(rng.choice(d2s))
    row_i, row_j = ro.a[i, d1].copy(), ro.a[j, d2].copy()
    for h in range(24):
        ro.set(i, d1, h, REST)
        ro.set(j, d2, h, REST)
    for h in range(24):
        ro.set(j, d1, h, int(row_i[h]))
        ro.set(i, d2, h, int(row_j[h]))


def _has_exchange_partner(ro, i):
    work = ro.hours > 0
    a_only = work[i][None] & ~work
    b_only = ~work[i][None] & work
    ok = a_only.any(axis=1) & b_only.any(axis=1)
    ok[i] = False
    return bool(ok.any())


def mutate(sol: SolutionRecord, ins: Instance, rng, perf: np.ndarray | None = None,
           profile: np.ndarray | None = None) -> Schedule:
    """Re-plan the working days of ``floor(m * U(0, wavelength))`` employees."""
    if perf is None:
        perf = np.ones((ins.m, ins.n_types))
    a = sol.sched.assign.copy()
    ro = _Roster(ins, a, perf, expected_demand(ins), profile)
    n_sel = int(math.floor(ins.m * rng.uniform(0.0, sol.wavelength)))
    for i in rng.choice(ins.m, size=min(n_sel, ins.m), replace=False):
        i = int(i)
        top, bottom = _thirds(ro.a)
        ops = []
        if i in top and ro.hours[i].sum() > 0:
            ops.append(1)
        if i in bottom and (ro.hours[i] == 0).any():
            ops.append(2)
        if (ro.hours[i] > 0).any() and (ro.hours[i] == 0).any():
            ops.append(3)
        if _has_exchange_partner(ro, i):
            ops.append(4)
        if not ops:
            continue
        op = ops[int(rng.integers(len(ops)))]
        if op == 1:
            _mut_drop_day(ro, i, rng, bottom)
        elif op == 2:
            _mut_add_day(ro, i, rng)
        elif op == 3:
            _mut_swap_days(ro, i, rng)
        else:
            _mut_exchange(ro, i, rng)
    return Schedule(ro.a)


# --------------------------------------------------------------------------- #
# short-term local search

def _block(row, h):
    a = h
    while a > 0 and row[a - 1] >= 0:
        a -= 1
    b = h
    while b < 23 and row[b + 1] >= 0:
        b += 1
    return a, b


class _Search:
    """Per-run context for the local-search moves."""

    def __init__(self, ins: Instance, ev: Evaluator):
        self.ins = ins
        self.ev = ev
        self.pf = ev.initial_performance()
        self.profile = stint_profile(ev)
        self.curves0 = ev.curves0
        self.dtau = ins.type_array("mean_service_time")
        self.daily_cap = int(math.floor(ins.globals.daily_cap + 1e-9))
        self.monthly_cap = int(math.floor(ins.globals.monthly_cap + 1e-9))

    def capacity(self, i, k, stint_min):
        c = self.curves0[i, k]
        pf = _kernel.perf_value(c[0], c[1], c[2], c[3], c[4], c[5], stint_min)
        return 60.0 * max(pf, 1.0 / self.ev.cap_factor) / self.dtau[k]

    def has_room(self, a, j, d):
        hours = (a[j] >= 0).sum(axis=1)
        if hours[d] >= self.daily_cap:
            return False
        D = a.shape[1]
        nw = len(monthly_windows(D))
        for w in range(max(0, d - 30), min(d, nw - 1) + 1):
            if hours[w:w + 31].sum() >= self.monthly_cap:
                return False
        return True

    def move(self, op, a, d, unserved, rng, tries=12):
        for _ in range(tries):
            cand = (self.ls1, self.ls2, self.ls3, self.ls4)[op - 1](a, d, unserved, rng)
            if cand is not None:
                return cand
        return None

    def ls1(self, a, d, unserved, rng):
        # late stint hours are the likeliest to be worth handing over, and the
        # taker is drawn by how much capacity the hour would add for them
        day = a[:, d]
        cells = np.argwhere(day >= 0)
        if not len(cells):
            return None
        pos = np.zeros(day.shape, dtype=np.int64)
        run = np.zeros(day.shape[0], dtype=np.int64)
        for h in range(24):
            run = np.where(day[:, h] >= 0, run + 1, 0)
            pos[:, h] = run - 1
        ci, ch = cells[:, 0], cells[:, 1]
        w = 1.05 - self.profile[ci, day[ci, ch], pos[ci, ch]]
        i, h = cells[rng.choice(len(cells), p=w / w.sum())]
        k = int(day[i, h])
        free = [j for j in np.flatnonzero(day[:, h] < 0)
                if self.pf[j, k] > 0.25 and self.has_room(a, j, d)]
        if not free:
            return None
        ones = np.ones(24)
        only_h = np.arange(24) == h
        gain = np.array([_kernel.hour_gains(day[j].astype(np.int64), ones, self.profile[j], k,
                                            ones, only_h)[h] for j in free])
        gain = np.clip(gain, 0.0, None) + 0.02
        j = free[int(rng.choice(len(free), p=gain / gain.sum()))]
        out = a.copy()
        out[i, d, h] = REST
        out[j, d, h] = k
        return out

    def ls2(self, a, d, unserved, rng):
        h = int(rng.integers(24))
        working = np.flatnonzero(a[:, d, h] >= 0)
        if working.size < 2:
            return None
        i = working[rng.integers(working.size)]
        others = working[a[working, d, h] != a[i, d, h]]
        if not others.size:
            return None
        j = others[rng.integers(others.size)]
        out = a.copy()
        out[i, d, h], out[j, d, h] = a[j, d, h], a[i, d, h]
        return out

    def ls3(self, a, d, unserved, rng):
        # shift a stretch one hour earlier: its last hour moves before its start
        cells = np.argwhere(a[:, d] >= 0)
        if not len(cells):
            return None
        i, h = cells[rng.integers(len(cells))]
        s, e = _block(a[i, d], h)
        if s == 0:
            return None
        k = a[i, d, e]
        if unserved[k, d * 24 + s - 1] < 0.5 * self.capacity(i, k, 30.0):
            return None
        out = a.copy()
        out[i, d, s - 1] = k
        out[i, d, e] = REST
        return out

    def ls4(self, a, d, unserved, rng):
        cells = np.argwhere(a[:, d] >= 0)
        if not len(cells):
            return None
        i, h = cells[rng.integers(len(cells))]
        s, e = _block(a[i, d], h)
        if e == 23:
            return None
        k = a[i, d, s]
        t = (e + 1 - s) * 60.0 + 30.0
        if unserved[k, d * 24 + e + 1] < 0.5 * self.capacity(i, k, t):
            return None
        if unserved[k, d * 24 + s] > _LS4_ORIGIN_LIMIT:
            return None
        out = a.copy()
        out[i, d, e + 1] = k
        out[i, d, s] = REST
        return out


def neighborhood_search(sol: SolutionRecord, search: _Search, agent: Agent, ns: int,
                        rank: int, n_pop: int, f_best: float, budget_left, on_eval=None,
                        accept: str = "best"):
    """Try ``ns`` agent-chosen moves on every day of ``sol``.

    ``accept`` decides where the moves start from. With "best" all ``D * ns``
    candidates are neighbours of ``sol`` itself and only the single best
    survives. With "day" the best improving candidate of each day becomes the
    starting point for the next day. With "move" every improving candidate
    is taken at once.

    Returns ``(best_sched, best_state, n_candidates)``; best_sched is None when
    no candidate beats ``sol``.
    """
    cur_a, cur_state, cur_f = sol.sched.assign, sol.state, sol.f
    rng = agent.rng
    best_f, best_a, best_state = sol.f, None, None
    n_cand = 0
    last_op = sol.last_op
    D = cur_a.shape[1]
    for d in range(D):
        for _ in range(ns):
            unserved = cur_state.counts[_kernel.CANCEL]
            if budget_left() <= 0:
                sol.last_op = last_op
                return best_a, best_state, n_cand
            s = agent_state(cur_f, f_best, sol.last_delta, rank, n_pop, last_op)
            op = agent.select(s)
            n_cand += 1
            cand = search.move(op, cur_a, d, unserved, rng)
            if cand is None:
                r, fc = 0.0, cur_f
            else:
                if on_eval is not None:
                    on_eval(cand)
                st = search.ev.run(cand, record=True, base=cur_state, from_day=d)
                fc = st.f
                r = max(0.0, cur_f - fc) / f_best
                if fc < best_f:
                    best_f, best_a, best_state = fc, cand, st
                    if accept == "move":
                        cur_a, cur_state, cur_f = cand, st, fc
            s_next = agent_state(min(cur_f, fc), f_best, r * f_best, rank, n_pop, op)
            agent.record(Transition(s, op, r, s_next))
            last_op = op
        if accept == "day" and best_a is not None and best_f < cur_f:
            cur_a, cur_state, cur_f = best_a, best_state, best_f
    sol.last_op = last_op
    return best_a, best_state, n_cand


# --------------------------------------------------------------------------- #
# main loop

@dataclass
class EvolveResult:
    best: SolutionRecord
    log: list
    evals: int
    op_counts: np.ndarray
    illegal_submissions: int
    full_model_f: float
    outcome: object = None

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gen", "evals_used", "best_f", "median_f", "pop_size", "ns_budget",
                    "op1", "op2", "op3", "op4"])
        for row in self.log:
            w.writerow([row["gen"], row["evals_used"], repr(row["best_f"]), repr(row["median_f"]),
                        row["pop_size"], row["ns_budget"], *row["ops"]])
        return buf.getvalue()

    def solution_json(self) -> str:
        return json.dumps({"schedule": self.best.sched.to_dict(), "f": self.best.f,
                           "full_model_f": self.full_model_f, "evals": self.evals,
                           "outcome": self.outcome.summary() if self.outcome else None},
                          sort_keys=True)


def evolve(ins: Instance, cfg: RunConfig | None = None, assessors=None,
           log_path=None, solution_path=None) -> EvolveResult:
    cfg = cfg or RunConfig.from_defaults()
    emotion, impair = assessors if assessors is not None else (None, None)
    ev = Evaluator(ins, emotion, impair, seed=cfg.simulation_seed, service_time_mode=cfg.service_time_mode,
                   constant_performance=cfg.constant_performance)
    search = _Search(ins, ev)
    perf = search.pf
    budget = cfg.budget(ins.m)
    rng = np.random.default_rng([cfg.seed, 11])
    agent = Agent(seed=cfg.seed, gamma=cfg.gamma, uniform=cfg.selector == "uniform")
    illegal = [0]

    def left():
        return budget - ev.calls

    def on_eval(a):
        if check_constraints(ins, a):
            illegal[0] += 1

    def evaluate(a):
        on_eval(a)
        st = ev.run(a, record=True)
        if cfg.constant_performance:
            return a, st
        bad = {i: int(H) for i, H in enumerate(st.impaired_at) if H >= 0}
        if bad and left() > 0:
            fixed, _ = repair(a, ins, perf, impaired=bad)
            a2 = fixed.assign
            on_eval(a2)
            st2 = ev.run(a2, record=True)
            if st2.f < st.f:
                return a2, st2
        return a, st

    pop = []
    for p in range(cfg.pop_max):
        if left() <= 0:
            break
        s0, _ = repair(init_solution(ins, perf=perf, rng=rng, profile=search.profile), ins, perf)
        a, st = evaluate(s0.assign)
        pop.append(SolutionRecord(Schedule(a), st.f, cfg.lambda_init, state=st))
    per_gen = cfg.pop_max * (1 + ins.horizon_days * cfg.ns_min)
    g_max = max(1, (budget - cfg.pop_max) // per_gen)
    rows = []
    best = min(pop, key=lambda s: s.f)
    g = 0
    while left() > 0 and best.f > 0:
        update_wavelength(pop, cfg.alpha)
        ns = ns_budget(g, g_max, cfg)
        ops_before = agent.counts.copy()
        ranked = sorted(range(len(pop)), key=lambda j: pop[j].f)
        rank_of = {j: r + 1 for r, j in enumerate(ranked)}
        f_best = best.f
        for j, sol in enumerate(pop):
            if left() <= 0:
                break
            trial = sol
            mutated = mutate(sol, ins, rng, perf, search.profile)
            if mutated != sol.sched:
                fixed, _ = repair(mutated, ins, perf)
                a, st = evaluate(fixed.assign)
                trial = SolutionRecord(Schedule(a), st.f, sol.wavelength, sol.stagnation_age,
                                       sol.last_delta, sol.last_op, st)
            na, nst, _ = neighborhood_search(trial, search, agent, ns, rank_of[j], len(pop),
                                             f_best, left, on_eval, cfg.acceptance)
            if na is not None:
                trial = SolutionRecord(Schedule(na), nst.f, trial.wavelength, state=nst,
                                       last_op=trial.last_op)
            sol.last_op = trial.last_op
            if trial.f < sol.f:
                sol.last_delta = sol.f - trial.f
                sol.sched, sol.f, sol.state = trial.sched, trial.f, trial.state
                sol.stagnation_age = 0
            else:
                sol.stagnation_age += 1
                sol.last_delta = 0.0
            if sol.f < best.f:
                best = sol
        g += 1
        target = pop_size(g, g_max, cfg)
        while len(pop) > target:
            order = sorted(range(len(pop)), key=lambda j: pop[j].f)
            worse = order[len(pop) // 2:]
            victim = max(worse, key=lambda j: (pop[j].stagnation_age, pop[j].f))
            pop.pop(victim)
        best = min(pop + [best], key=lambda s: s.f)
        fs = [s.f for s in pop]
        rows.append({"gen": g, "evals_used": ev.calls, "best_f": best.f,
                     "median_f": float(np.median(fs)), "pop_size": len(pop), "ns_budget": ns,
                     "ops": [int(x) for x in agent.counts - ops_before]})
        log.info("gen %d evals %d best %.1f median %.1f", g, ev.calls, best.f, np.median(fs))

    full = Evaluator(ins, emotion, impair, seed=cfg.simulation_seed,
                     service_time_mode=cfg.service_time_mode)
    fst = full.run(best.sched)
    res = EvolveResult(best, rows, ev.calls, agent.counts.copy(), illegal[0], fst.f,
                       full.outcome(fst))
    if log_path is not None:
        atomic_write_text(log_path, res.log_csv())
    if solution_path is not None:
        atomic_write_text(solution_path, res.solution_json())
    return res
