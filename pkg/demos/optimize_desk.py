"""
Optimizing the desk instance
============================

A short memetic run. Each generation mutates which days people work, lets
the operator-selection agent refine the hours, and shrinks the population.
"""

from stress_sched.instance import desk_instance
from stress_sched.optimizer import RunConfig, evolve

ins = desk_instance()
cfg = RunConfig.from_defaults(seed=0, eval_budget=3000)
res = evolve(ins, cfg)

print(res.log_csv())
print(f"best f during search: {res.best.f:.0f}")
print(f"re-evaluated with the full model: {res.full_model_f:.0f}")
print("operator picks (LS1..LS4):", res.op_counts.tolist())
print("illegal schedules submitted:", res.illegal_submissions)
