"""
Multiplicative inheritance and the exponential equilibrium
==========================================================

Here the child's trait is the parents' sum scaled by a uniform factor on
[0, 1]. The unit exponential density is a fixed point of the birth
operator, and the normalized flow is drawn to it.
"""

import numpy as np

from hermevo import MultiplicativeKernel
from hermevo.kernels import tjonwu_stationary_reference
from hermevo.macroeq import MacroScenario, SolverConfig, apply_P, solve_to_time
from hermevo.measures import DiscreteMeasure, GridSpec, grid_from_atoms, l1_distance, mean

kernel = MultiplicativeKernel.tjon_wu()
grid = GridSpec.spanning(0.0, 20.0, 4096)
expo = tjonwu_stationary_reference(1.0, grid)

# one application of P leaves e^{-x} (almost) unchanged
print(f"L1(P f, f) = {l1_distance(apply_P(kernel, expo), expo):.2e}")

# uniform on [0, 2] has mean 1, the same as the equilibrium
atoms = DiscreteMeasure(np.linspace(0, 2, 2001), np.ones(2001)).normalized()
start = grid_from_atoms(atoms, grid.origin, grid.spacing, grid.n_cells)
print(f"initial mean {mean(start):.6f}")

scenario = MacroScenario(kernel, config=SolverConfig(dt=0.05, grid=grid))
traj = solve_to_time(start, scenario, 30.0, snapshot_every=5.0)
for s in traj.states:
    print(f"t = {s.t:4.0f}   L1 to e^-x = {l1_distance(s.measure, expo):.2e}   mean = {s.mean:.9f}")
