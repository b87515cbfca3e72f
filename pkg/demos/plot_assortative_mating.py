"""
Assortative mating and its normalizing constants
================================================

With a preference for similar partners, each individual's mating rate
is rescaled so that everyone mates at unit rate. The rescaling constants
solve a small linear system; isolated individuals get larger constants.
"""

import numpy as np

from hermevo import AdditiveKernel, DemographyParams, NoiseDensity
from hermevo.analysis import classify_model
from hermevo.macroeq import MacroScenario, SolverConfig, solve_to_time
from hermevo.mating import (
    CapabilityFunction,
    MatingModel,
    PreferenceFunction,
    normalized_matrix,
    solve_mating_constants_discrete,
)
from hermevo.measures import GridMeasure, GridSpec

pref = PreferenceFunction.gaussian(0.5, floor=0.05)
traits = np.array([-2.0, -0.1, 0.0, 0.1, 0.2, 3.0])
consts = solve_mating_constants_discrete(traits, pref)
rates = normalized_matrix(traits, pref, consts)
for x, c, r in zip(traits, consts.c, rates.sum(axis=1)):
    print(f"x = {x:+.1f}   c = {c:7.4f}   total rate {r:.12f}")

# the macroscopic flow under assortative mating grows at unit per-capita rate
model = MatingModel("assortative_normalized", CapabilityFunction.constant(1.0), pref)
dem = DemographyParams.constants(0.25, 1.0, 1.0)
print("regime:", classify_model(model, dem))
grid = GridSpec.spanning(-10, 10, 256)
start = GridMeasure(grid.origin, grid.spacing, np.exp(-grid.nodes ** 2 / 2)).normalized().scaled(0.2)
sc = MacroScenario(AdditiveKernel(NoiseDensity.gaussian(0.5)), model, dem,
                   config=SolverConfig(dt=0.05, scheme="explicit_euler", grid=grid))
traj = solve_to_time(start, sc, 8.0, snapshot_every=2.0)
for s in traj.states:
    print(f"t = {s.t:3.0f}   mass {s.mass:.4f}   variance {s.variance:.4f}")
