"""
Comparing algorithms
====================

A handful of repeated runs per algorithm, summarized with box-plot numbers
and a rank-sum test against the agent-driven memetic algorithm. The full
comparison uses 30 runs at the default budget; this one is kept small.
"""

import json

from stress_sched.bench import report, run_trials
from stress_sched.instance import desk_instance

ins = desk_instance()
trials = run_trials(ins, ["ma-dqn", "ma-ne", "ga"], runs=5, budget=2000,
                    progress=lambda a, r, f: print(f"{a} run {r}: {f:.0f}"))
print(json.dumps(report(trials), indent=1))
