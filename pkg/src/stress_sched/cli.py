"""Command-line entry point: ``stress-sched {gen,solve,bench,curves,validate}``."""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import bench, instance
from ._io import atomic_write_text, load_defaults
from .nfn import load_assessors
from .optimizer import RunConfig, evolve
from .perf_model import CurveBaselines, EmotionalState, derive_curve, sample_curve

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


def _threads(flag: int | None) -> int:
    env = os.environ.get("STRESS_SCHED_THREADS")
    if env:
        return max(1, int(env))
    return flag if flag else (os.cpu_count() or 1)


def _load_instance(path) -> instance.Instance:
    return instance.load(path)


def _assessors(path):
    return load_assessors(path) if path else None


def cmd_gen(args) -> int:
    if args.preset:
        spec = instance.named_spec(args.preset)
    else:
        spec = json.loads(Path(args.spec).read_text())
    if args.seed is not None:
        spec["seed"] = args.seed
    ins = instance.generate(spec, _assessors(args.assessors))
    instance.save(ins, args.out)
    print(f"wrote {args.out}: m={ins.m} N={ins.n_categories} D={ins.horizon_days}")
    return EXIT_OK


def cmd_validate(args) -> int:
    ins = _load_instance(args.instance)
    problems = instance.validate(ins)
    for p in problems:
        print(p)
    if problems:
        return EXIT_INVALID
    print(f"{args.instance}: ok")
    return EXIT_OK


def cmd_solve(args) -> int:
    ins = _load_instance(args.instance)
    out = Path(args.out)
    algo = bench.canonical(args.algo)
    assessors = _assessors(args.assessors)
    if algo == "ga":
        sched, f, evals, log_csv = bench.run_baseline_ga(ins, seed=args.seed, budget=args.budget,
                                                         assessors=assessors, with_log=True,
                                                         sim_seed=args.sim_seed)
        atomic_write_text(out / "run_log.csv", log_csv)
        atomic_write_text(out / "solution.json", json.dumps(
            {"schedule": sched.to_dict(), "f": f, "evals": evals}, sort_keys=True))
        print(f"ga: f={f:g} evals={evals}")
        return EXIT_OK
    cfg = RunConfig.from_defaults(seed=args.seed, sim_seed=args.sim_seed, eval_budget=args.budget,
                                  **bench.VARIANTS[algo])
    res = evolve(ins, cfg, assessors, log_path=out / "run_log.csv",
                 solution_path=out / "solution.json")
    print(f"{algo}: f={res.best.f:g} full-model f={res.full_model_f:g} evals={res.evals}")
    return EXIT_OK


def cmd_bench(args) -> int:
    ins = _load_instance(args.instance)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        bench.canonical(a)

    def progress(algo, r, f):
        print(f"{algo} run {r}: f={f:g}", flush=True)

    trials = bench.run_trials(ins, algos, runs=args.runs, master_seed=args.master_seed,
                              budget=args.budget, instance_id=Path(args.instance).stem,
                              assessors=_assessors(args.assessors), progress=progress,
                              workers=_threads(args.threads))
    summary = bench.write_results(trials, args.out, reference=algos[0])
    for name, s in summary["algorithms"].items():
        extra = f" p={s['p_vs_reference']:.3g}" if "p_vs_reference" in s else ""
        print(f"{name}: median={s['median']:g}{extra}")
    return EXIT_OK


def cmd_curves(args) -> int:
    try:
        vals = [float(x) for x in args.state.split(",")]
    except ValueError:
        raise _Usage("--state needs five comma-separated numbers") from None
    if len(vals) != 5:
        raise _Usage("--state needs five comma-separated numbers")
    b = load_defaults()["curve_baselines"][args.cls]
    curve = derive_curve(args.skill, EmotionalState(*vals), CurveBaselines(**b))
    t, pf = sample_curve(curve, args.horizon, args.step)
    buf = io.StringIO()
    buf.write("t,pf\n")
    for ti, pi in zip(t, pf):
        buf.write(f"{float(ti):g},{float(pi)!r}\n")
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stress-sched", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="JSON generator spec")
    src.add_argument("--preset", choices=sorted(load_defaults()["instances"]))
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--assessors")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="optimize one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--algo", default="ma-dqn", choices=list(bench.ALGORITHMS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sim-seed", type=int, help="seed of the simulated arrivals (default: --seed)")
    s.add_argument("--budget", type=int, help="simulator calls (default 600*m)")
    s.add_argument("--out", required=True)
    s.add_argument("--assessors")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="repeated runs and rank-sum tests")
    b.add_argument("--instance", required=True)
    b.add_argument("--runs", type=int, default=30)
    b.add_argument("--algos", default="ma-dqn,ma-ne,ma-dqn-ne,ga")
    b.add_argument("--master-seed", type=int, default=0)
    b.add_argument("--budget", type=int)
    b.add_argument("--out", required=True)
    b.add_argument("--assessors")
    b.add_argument("--threads", type=int)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("curves", help="sample a performance curve as CSV")
    c.add_argument("--skill", type=float, required=True)
    c.add_argument("--state", required=True, help="depression,activation,anxiety,concentration,endurance")
    c.add_argument("--class", dest="cls", choices=["easy", "hard"], default="easy")
    c.add_argument("--horizon", type=float, default=480.0)
    c.add_argument("--step", type=float, default=1.0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_curves)

    v = sub.add_parser("validate", help="check an instance file")
    v.add_argument("--instance", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
