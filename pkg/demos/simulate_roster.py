"""
Simulating a roster
===================

Build the desk-scale instance, draw a starting roster, and see where the
requests go. Then compare two ways of spending the same hours.
"""

import numpy as np

from stress_sched.instance import desk_instance
from stress_sched.optimizer import init_solution
from stress_sched.simulator import REST, Schedule, check_constraints, simulate

ins = desk_instance()
print(f"{ins.m} employees, {ins.n_types} job types, {ins.horizon_days} days")

roster = init_solution(ins, seed=0)
print("static violations:", check_constraints(ins, roster))
print("hours per employee:", (roster.assign >= 0).sum(axis=(1, 2)))

out = simulate(ins, roster, seed=0)
print(f"\nrequests {out.n.sum()}: served {out.n_served.sum()}, canceled {out.n_cancel.sum()}, "
      f"delayed {out.n_delay.sum()}")
print(f"objective f = {out.f:.0f}  (weighted delays {out.f_delay:.0f}, weighted cancels {out.f_cancel:.0f},"
      f" cancels count {ins.globals.cancel_weight:g}x)")

# An empty roster: nobody answers, so every request is both delayed and canceled.
empty = simulate(ins, Schedule.empty(ins.m, ins.horizon_days), seed=0)
print(f"nobody working: f = {empty.f:.0f}")

# Same number of hours, arranged differently. Performance falls over a stint
# and recovers after an hour of rest, so short stints keep people fresher.
def block_roster(pattern):
    a = np.full((ins.m, ins.horizon_days, 24), REST, dtype=np.int8)
    for i in range(ins.m):
        k = i % ins.n_types
        for d in range(ins.horizon_days):
            for h, on in enumerate(pattern):
                if on:
                    a[i, d, 8 + h] = k
    return Schedule(a)


long_shift = block_roster([1] * 9 + [0, 0, 0])
split_shift = block_roster([1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0])
for name, s in [("9 h in one block", long_shift), ("three 3 h blocks", split_shift)]:
    print(f"{name:>17}: f = {simulate(ins, s, seed=0).f:.0f}")
