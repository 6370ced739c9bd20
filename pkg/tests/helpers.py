"""Independent oracles used across the test suite.

These deliberately avoid the library's solver paths: permutation
enumeration for equal-weight transport, and a one-parameter scan for the
2x2 coupling instance.
"""

import itertools

import numpy as np

from gachaos.measures import WeightedEmpiricalMeasure
from gachaos.transport import cost_matrix


def brute_force_ot_equal_weights(mu: WeightedEmpiricalMeasure,
                                 nu: WeightedEmpiricalMeasure, cost) -> float:
    """Exact optimum over permutation couplings.

    Valid for equal-weight measures with the same atom count: Birkhoff's
    theorem makes permutation matrices the vertices of the coupling
    polytope, so the optimum is attained at one of them.
    """
    n = mu.n_atoms
    assert nu.n_atoms == n
    assert np.allclose(mu.weights, 1.0 / n) and np.allclose(nu.weights, 1.0 / n)
    c = cost_matrix(mu.support, nu.support, cost)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, sum(c[i, perm[i]] for i in range(n)) / n)
    return float(best)


def brute_force_2x2_plan(a, b, c):
    """Optimal 2x2 transport by scanning the single degree of freedom."""
    lo = max(0.0, a[0] - b[1])
    hi = min(a[0], b[0])
    ts = np.linspace(lo, hi, 20001)
    costs = (ts * c[0, 0] + (a[0] - ts) * c[0, 1]
             + (b[0] - ts) * c[1, 0] + (a[1] - b[0] + ts) * c[1, 1])
    best = int(np.argmin(costs))
    t = ts[best]
    plan = np.array([[t, a[0] - t], [b[0] - t, a[1] - b[0] + t]])
    return float(costs[best]), plan


def random_measure(gen, n_atoms, dim, scale=3.0, equal_weights=False):
    support = scale * gen.standard_normal(size=(n_atoms, dim))
    if equal_weights:
        weights = np.full(n_atoms, 1.0 / n_atoms)
    else:
        weights = gen.dirichlet(np.ones(n_atoms))
    return WeightedEmpiricalMeasure(support, weights)
