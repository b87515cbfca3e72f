"""
Relaxation to the Gaussian profile
==================================

Offspring inherit the parents' average trait plus independent gaussian
noise. Whatever the starting distribution, the normalized flow forgets it
and settles on a Gaussian with twice the noise variance.
"""

import math

import numpy as np

from hermevo import AdditiveKernel, DiscreteMeasure, NoiseDensity
from hermevo.kernels import stationary_additive_profile
from hermevo.macroeq import MacroScenario, SolverConfig, default_grid, solve_to_time
from hermevo.measures import variance, wasserstein_1d

kernel = AdditiveKernel(NoiseDensity.gaussian(1.0))
grid = default_grid(kernel, 0.0)

# the stationary profile as a truncated infinite convolution
profile = stationary_additive_profile(kernel.noise, 0.0, 16, grid)
print(f"profile variance {variance(profile):.5f} (expected 2)")

# start from two atoms at -1 and +1 and run to t = 30
start = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
scenario = MacroScenario(kernel, config=SolverConfig(dt=0.05, grid=grid))
traj = solve_to_time(start, scenario, 30.0, reference=profile, snapshot_every=2.0)

for t, d in zip(traj.times, traj.distances):
    print(f"t = {t:5.1f}   W1 to profile = {d:.2e}")

# the distance falls by a constant factor per unit time
rate = np.polyfit(traj.times[1:], np.log(traj.distances[1:]), 1)[0]
print(f"fitted log-rate {rate:.3f}")

# a second start with the same mean: the two flows approach each other
other = solve_to_time(DiscreteMeasure.dirac(0.0), scenario, 30.0, snapshot_every=2.0)
gap = [wasserstein_1d(a.measure, b.measure) for a, b in zip(traj.states, other.states)]
print("gap between the two flows:", " ".join(f"{g:.1e}" for g in gap[::3]))
print(f"final sd {math.sqrt(traj.final.variance):.4f} vs sqrt(2) = {math.sqrt(2):.4f}")
