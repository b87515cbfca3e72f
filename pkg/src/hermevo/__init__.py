"""Trait evolution in hermaphroditic populations.

Modules:

* :mod:`~hermevo.measures` -- atomic and grid measures, Wasserstein distance.
* :mod:`~hermevo.kernels` -- offspring kernels and stationary profiles.
* :mod:`~hermevo.mating` -- mating-rate functions and their constants.
* :mod:`~hermevo.ibm` -- exact event-driven individual-based simulation.
* :mod:`~hermevo.macroeq` -- deterministic solvers for the population equation.
* :mod:`~hermevo.analysis` -- experiment drivers and reports.
* :mod:`~hermevo.cli` -- configs, runs and file output.
"""

from .demography import DemographyParams
from .kernels import (
    AdditiveKernel,
    InterpolationLaw,
    InterpolativeKernel,
    MultiplicativeKernel,
    NoiseDensity,
)
from .mating import CapabilityFunction, MatingModel, PreferenceFunction
from .measures import DiscreteMeasure, GridMeasure, GridSpec, wasserstein_1d

__version__ = "0.1.0"

__all__ = [
    "AdditiveKernel",
    "CapabilityFunction",
    "DemographyParams",
    "DiscreteMeasure",
    "GridMeasure",
    "GridSpec",
    "InterpolationLaw",
    "InterpolativeKernel",
    "MatingModel",
    "MultiplicativeKernel",
    "NoiseDensity",
    "PreferenceFunction",
    "wasserstein_1d",
]
