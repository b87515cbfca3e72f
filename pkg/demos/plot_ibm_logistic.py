"""
Individuals versus the macroscopic equation
===========================================

A stochastic population of hermaphrodites with birth rate 2, death rate 1
and unit competition. Rescaled by N, its size follows the logistic curve
and settles at the carrying capacity 1. Trait profiles of larger
populations track the deterministic solution more closely.
"""

import numpy as np

from hermevo import AdditiveKernel, DemographyParams, NoiseDensity
from hermevo.analysis import ConvergenceFamily, ibm_macro_convergence
from hermevo.ibm import IbmScenario, initial_population, simulate
from hermevo.macroeq import logistic_mass
from hermevo.mating import CapabilityFunction, MatingModel
from hermevo.measures import GridMeasure, GridSpec

kernel = AdditiveKernel(NoiseDensity.gaussian(1.0))
mating = MatingModel("semirandom_selfing", CapabilityFunction.constant(2.0))
dem = DemographyParams.constants(1.0, 1.0, 1.0)

# mass trajectory of one large population started at half capacity
N = 2000
init = initial_population(lambda rng, n: rng.normal(size=n), N // 2, seed=1)
trace = simulate(IbmScenario(mating, kernel, dem, init, 6.0, N, seed=2, snapshot_every=1.0,
                             record_events=False))
for t, m in zip(trace.times, trace.scaled_mass):
    print(f"t = {t:3.0f}   IBM mass {m:.3f}   logistic {float(logistic_mass(t, 0.5, 2, 1, 1, 1)):.3f}")
print(f"{trace.n_events} events, worst bookkeeping drift {trace.bookkeeping_error:.1e}")

# profile distances for growing N
grid = GridSpec.spanning(-12, 12, 1024)
start = GridMeasure(grid.origin, grid.spacing, np.exp(-grid.nodes ** 2 / 2)).normalized()
family = ConvergenceFamily(mating, kernel, dem, start, initial_mass=0.5)
rep = ibm_macro_convergence(family, [100, 1000], replicas=4, T=2.0, seed=3)
for n, d, e in zip(rep.N, rep.final_distances, rep.mass_errors):
    print(f"N = {n:5d}   W1 to macro profile {d:.3f}   relative mass error {e:.3f}")
