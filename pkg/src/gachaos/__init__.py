"""Continuous genetic algorithm as an interacting particle system.

The package couples the fitness-selection / crossover / mutation dynamics
with its discrete-time mean-field recursion, provides exact optimal
transport under Euclidean, truncated, and indicator costs, realizes the
optimal-coupling parent sampler, and ships an experiment harness that
measures the convergence rates of the empirical measure in the population
size and in the time step.
"""

__version__ = "0.1.0"

from .engine import AuxiliaryDraws, PopulationState, SimParams  # noqa: F401
from .fitness import make_fitness  # noqa: F401
from .measures import (WeightedEmpiricalMeasure, load_measure,  # noqa: F401
                       save_measure, uniform_empirical)
from .transport import CostKind, bl_distance, solve_ot  # noqa: F401
