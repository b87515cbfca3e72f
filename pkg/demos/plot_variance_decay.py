"""
Blending inheritance and variance loss
======================================

When the child lands between its parents, trait variance shrinks at a
rate set by how spread out the landing position is. With landing noise of
variance 1/3 the variance decays like exp(-t/3), and the population
collapses onto its mean.
"""

from hermevo import DiscreteMeasure, InterpolationLaw
from hermevo.analysis import variance_decay_check

start = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
for var_z in (0.0, 1 / 3, 0.6):
    rep = variance_decay_check(InterpolationLaw.three_point(var_z), start, T=40.0)
    print(f"Var Z = {var_z:.3f}: fitted rate {rep.fitted_rate:+.4f}, "
          f"predicted {rep.expected_rate:+.4f}, W1 to the mean at T: {rep.final_distance_to_q:.1e}")

# a population with no variance stays put
rep = variance_decay_check(InterpolationLaw.three_point(1 / 3), DiscreteMeasure.dirac(0.7), T=5.0)
print("variances from a point mass:", set(rep.variances))
