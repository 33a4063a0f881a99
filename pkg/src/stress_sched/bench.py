"""Repeated-trial experiments: a penalty-function GA, the memetic variants,
rank-sum significance tests and box-plot summaries."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .instance import Instance
from .optimizer import RunConfig, evolve
from .simulator import REST, Evaluator, Schedule, check_constraints, monthly_windows

VARIANTS = {
    "ma-dqn": {"selector": "dqn", "constant_performance": False},
    "ma-ne": {"selector": "uniform", "constant_performance": False},
    "ma-dqn-ne": {"selector": "dqn", "constant_performance": True},
}
ALGORITHMS = (*VARIANTS, "ga")
_ALIASES = {"MA-DQN": "ma-dqn", "MA-NE": "ma-ne", "MA-DQN-NE": "ma-dqn-ne", "GA": "ga"}


def canonical(name: str) -> str:
    key = _ALIASES.get(name, name).lower()
    if key not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    return key


@dataclass
class TrialSet:
    algorithm: str
    instance_id: str
    values: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    def add(self, value: float, seed: int, evals: int, wall_ms: float) -> None:
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"objective values must be finite and non-negative, got {value}")
        self.values.append(float(value))
        self.seeds.append(int(seed))
        self.evals.append(int(evals))
        self.wall_ms.append(float(wall_ms))


def run_seed(master_seed: int, algorithm: str, run: int) -> int:
    """Reproducible per-run seed, distinct across algorithms."""
    h = hashlib.sha256(f"{master_seed}:{algorithm}:{run}".encode()).digest()
    return int.from_bytes(h[:4], "little") & 0x7FFFFFFF


def simulation_seed(master_seed: int) -> int:
    """Seed of the arrival and cancellation streams shared by every run of a trial set."""
    return run_seed(master_seed, "simulation", 0)


# --------------------------------------------------------------------------- #
# baseline GA

def violation_hours(ins: Instance, a: np.ndarray, impaired_at=None) -> int:
    """Hours by which the caps are exceeded, plus hours scheduled after an impairment."""
    hours = (a >= 0).sum(axis=2)
    cap_d = ins.globals.daily_cap
    total = float(np.clip(hours - cap_d, 0, None).sum())
    D = a.shape[1]
    for w in monthly_windows(D):
        tot = hours[:, w:min(D, w + 31)].sum(axis=1)
        total += float(np.clip(tot - ins.globals.monthly_cap, 0, None).sum())
    if impaired_at is not None:
        flat = (a >= 0).reshape(a.shape[0], -1)
        for i, H in enumerate(impaired_at):
            if H >= 0:
                total += int(flat[i, H:].sum())
    return int(math.ceil(total))


def _random_roster(ins: Instance, rng) -> np.ndarray:
    m, D, K = ins.m, ins.horizon_days, ins.n_types
    a = np.full((m, D, 24), REST, dtype=np.int8)
    cap = int(ins.globals.daily_cap)
    active = np.flatnonzero(ins.arrival_rates.sum(axis=(0, 1, 3)) > 0)
    lo, hi = (int(active.min()), int(active.max()) + 1) if active.size else (0, 24)
    for i in range(m):
        for d in range(D):
            if rng.random() < 5 / 7:
                n = int(rng.integers(1, min(cap, hi - lo) + 1))
                s = int(rng.integers(lo, hi - n + 1))
                a[i, d, s:s + n] = rng.integers(K)
    return a


def run_baseline_ga(ins: Instance, seed: int = 0, budget: int | None = None,
                    pop: int = 60, assessors=None, with_log: bool = False,
                    sim_seed: int | None = None):
    """Generational GA with a static penalty; returns ``(best_schedule, f, evals)``
    plus a per-generation CSV log when ``with_log`` is set.

    The reported solution is the best statically feasible one evaluated, with
    the penalized best as a fallback when none was feasible.
    """
    emotion, impair = assessors if assessors is not None else (None, None)
    ev = Evaluator(ins, emotion, impair, seed=seed if sim_seed is None else sim_seed)
    budget = budget if budget is not None else RunConfig().budget(ins.m)
    rng = np.random.default_rng([seed, 23])
    penalty = 10.0 * ins.globals.cancel_weight
    K = ins.n_types
    rate = 1.0 / (ins.m * ins.horizon_days * 24)
    best_feasible = (math.inf, None)
    best_pen = (math.inf, None)

    def score(a):
        nonlocal best_feasible, best_pen
        st = ev.run(a)
        static = not check_constraints(ins, a)
        fp = st.f + penalty * violation_hours(ins, a, st.impaired_at)
        if static and st.f < best_feasible[0]:
            best_feasible = (st.f, a.copy())
        if fp < best_pen[0]:
            best_pen = (fp, a.copy())
        return fp

    P, F, rows = [], [], []
    while len(P) < pop and ev.calls < budget:
        a = _random_roster(ins, rng)
        P.append(a)
        F.append(score(a))
    while ev.calls < budget:
        F_arr = np.array(F)
        elite = int(np.argmin(F_arr))
        children, cf = [P[elite]], [F[elite]]
        while len(children) < len(P) and ev.calls < budget:
            parents = []
            for _ in range(2):
                i, j = rng.integers(len(P), size=2)
                parents.append(P[i] if F[i] <= F[j] else P[j])
            mask = rng.random(parents[0].shape) < 0.5
            child = np.where(mask, parents[0], parents[1]).astype(np.int8)
            flip = rng.random(child.shape) < rate
            if flip.any():
                child[flip] = rng.integers(-1, K, size=int(flip.sum()))
            children.append(child)
            cf.append(score(child))
        P, F = children, cf
        rows.append((len(rows) + 1, ev.calls, best_pen[0], float(np.median(F)), len(P)))
    f, a = best_feasible if best_feasible[1] is not None else best_pen
    if not with_log:
        return Schedule(a), f, ev.calls
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gen", "evals_used", "best_penalized_f", "median_penalized_f", "pop_size"])
    for g, e, b, med, n in rows:
        w.writerow([g, e, repr(b), repr(med), n])
    return Schedule(a), f, ev.calls, buf.getvalue()


# --------------------------------------------------------------------------- #
# experiments

def run_ablation(ins: Instance, cfg: RunConfig, variant: str, assessors=None):
    """One memetic run; the returned objective is re-evaluated under the full model."""
    key = canonical(variant)
    if key not in VARIANTS:
        raise ValueError(f"{variant!r} is not a memetic variant")
    params = {**cfg.__dict__, **VARIANTS[key]}
    return evolve(ins, RunConfig(**params), assessors)


def _one_run(ins, algo, seed, budget, assessors, sim_seed):
    t0 = time.perf_counter()
    if algo == "ga":
        _, f, evals = run_baseline_ga(ins, seed=seed, budget=budget, assessors=assessors,
                                      sim_seed=sim_seed)
    else:
        cfg = RunConfig.from_defaults(seed=seed, sim_seed=sim_seed, eval_budget=budget)
        res = run_ablation(ins, cfg, algo, assessors)
        f, evals = res.full_model_f, res.evals
    return f, evals, 1000.0 * (time.perf_counter() - t0)


def run_trials(ins: Instance, algorithms, runs: int = 30, master_seed: int = 0,
               budget: int | None = None, instance_id: str = "desk", assessors=None,
               progress=None, workers: int = 1) -> list[TrialSet]:
    """``runs`` independent runs per algorithm; results do not depend on ``workers``.

    Every run sees the same simulated arrivals and cancellation draws, fixed by
    ``master_seed``; only the search's own randomness changes between runs.
    """
    jobs = [(canonical(a), r) for a in algorithms for r in range(runs)]
    seeds = {job: run_seed(master_seed, *job) for job in jobs}
    sim = simulation_seed(master_seed)
    results = {}
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {job: pool.submit(_one_run, ins, job[0], seeds[job], budget, assessors, sim)
                    for job in jobs}
            for job, fut in futs.items():
                results[job] = fut.result()
                if progress:
                    progress(job[0], job[1], results[job][0])
    else:
        for job in jobs:
            results[job] = _one_run(ins, job[0], seeds[job], budget, assessors, sim)
            if progress:
                progress(job[0], job[1], results[job][0])
    out = {}
    for (algo, r) in jobs:
        ts = out.setdefault(algo, TrialSet(algo, instance_id))
        ts.add(results[(algo, r)][0], seeds[(algo, r)], *results[(algo, r)][1:])
    return list(out.values())


# --------------------------------------------------------------------------- #
# statistics

def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_sum_test(a, b) -> float:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney) p-value.

    Exact enumeration over all rank partitions when the pooled size is at most
    12; otherwise the normal approximation with tie and continuity correction.
    """
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        return 1.0
    na, nb = a.size, b.size
    n = na + nb
    ranks = _midranks(pooled)
    w = ranks[:na].sum()
    mean = na * (n + 1) / 2.0
    if n <= 12:
        obs = abs(w - mean)
        hits = total = 0
        for idx in itertools.combinations(range(n), na):
            total += 1
            if abs(ranks[list(idx)].sum() - mean) >= obs - 1e-9:
                hits += 1
        return hits / total
    _, counts = np.unique(pooled, return_counts=True)
    tie = (counts ** 3 - counts).sum() / (n * (n - 1))
    var = na * nb / 12.0 * ((n + 1) - tie)
    u = w - na * (na + 1) / 2.0
    diff = abs(u - na * nb / 2.0) - 0.5
    if diff <= 0:
        return 1.0
    return min(1.0, math.erfc(diff / math.sqrt(var) / math.sqrt(2.0)))


def box_stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    out = v[(v > q3 + 1.5 * iqr) | (v < q1 - 1.5 * iqr)]
    return {"n": int(v.size), "min": float(v.min()), "q1": float(q1), "median": float(med),
            "mean": float(v.mean()), "q3": float(q3), "max": float(v.max()),
            "outliers": sorted(float(x) for x in out)}


def report(trials, reference: str | None = None, alpha: float = 0.05) -> dict:
    if not trials:
        raise ValueError("need at least one trial set")
    ref = canonical(reference) if reference else trials[0].algorithm
    summary = {"reference": ref, "alpha": alpha, "algorithms": {}}
    ref_set = next((t for t in trials if t.algorithm == ref), trials[0])
    for t in trials:
        entry = box_stats(t.values)
        entry["instance"] = t.instance_id
        if len(trials) > 1 and t is not ref_set:
            p = rank_sum_test(ref_set.values, t.values)
            entry["p_vs_reference"] = p
            entry["significant"] = bool(p < alpha)
        summary["algorithms"][t.algorithm] = entry
    return summary


def write_results(trials, out_dir, reference: str | None = None) -> dict:
    out_dir = Path(out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "instance", "run", "seed", "final_f", "evals", "wall_ms"])
    for t in trials:
        for r, (v, s, e, ms) in enumerate(zip(t.values, t.seeds, t.evals, t.wall_ms)):
            w.writerow([t.algorithm, t.instance_id, r, s, repr(v), e, f"{ms:.1f}"])
    atomic_write_text(out_dir / "results.csv", buf.getvalue())
    summary = report(trials, reference)
    atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True))
    return summary
