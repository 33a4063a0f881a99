"""
Working-performance curves
==========================

How an employee's output changes over a stint of continuous work, and how
the five emotional levels bend that curve.
"""

import numpy as np

from stress_sched.perf_model import CurveBaselines, EmotionalState, derive_curve, performance_at

# Baseline lengths (minutes) of the rise, plateau and decline for easy jobs.
easy = CurveBaselines(t_rise=45.0, t_peak=24.0, t_fall=72.0)

# Levels run from 1 to 5: depression, activation, anxiety, concentration, endurance.
states = {
    "calm and alert": EmotionalState(1, 5, 1, 5, 5),
    "average": EmotionalState(3, 3, 3, 3, 3),
    "anxious": EmotionalState(2, 3, 5, 3, 3),
    "low mood": EmotionalState(5, 2, 3, 2, 2),
}

t = np.arange(0, 481, 60.0)
print("minutes into stint:", " ".join(f"{x:5.0f}" for x in t))
for name, s in states.items():
    c = derive_curve(0.9, s, easy)
    pf = performance_at(c, t)
    print(f"{name:>18}:", " ".join(f"{x:5.2f}" for x in pf))

# The plateau is where the curve sits at its maximum; after it the decline is
# Gaussian, so one decline-width later the employee is at exp(-1/2) of peak.
c = derive_curve(0.9, states["average"], easy)
print(f"\naverage state: peak {c.u_max:.3f} from minute {c.mu_rise:.1f} "
      f"to {c.peak_end:.1f}, decline width {c.sigma_fall:.1f} min")
print("one width past the plateau:", performance_at(c, c.peak_end + c.sigma_fall) / c.u_max)
