"""Weighted discrete probability measures and the truncated ground cost.

A measure is a finite list of support points in R^d together with simplex
weights. Duplicate support points are deliberately kept as distinct atoms:
the coupling construction indexes atoms by particle identity, and merging
would destroy that index map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeightedEmpiricalMeasure",
    "MomentReport",
    "as_points",
    "uniform_empirical",
    "truncated_cost",
    "moment_q",
    "reweight_by_fitness",
    "save_measure",
    "load_measure",
]

#: construction tolerance on |sum(weights) - 1| before renormalization
WEIGHT_SUM_TOL = 1e-12


def as_points(points) -> np.ndarray:
    """Coerce ``points`` to a read-only (n, d) float array of finite values."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"support must be a list of points, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ValueError("support must be nonempty")
    if not np.isfinite(arr).all():
        raise ValueError("support points must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeightedEmpiricalMeasure:
    """sum_i w_i * delta_{x_i} with nonnegative weights summing to one.

    Weights within ``WEIGHT_SUM_TOL`` of unit total are renormalized on
    construction; anything further off is rejected.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = as_points(self.support)
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or weights.shape[0] != support.shape[0]:
            raise ValueError(
                f"weights shape {weights.shape} does not match {support.shape[0]} atoms"
            )
        if not np.isfinite(weights).all():
            raise ValueError("weights must be finite")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL}")
        weights = weights / total
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.support.shape[0]


@dataclass(frozen=True)
class MomentReport:
    """q-th absolute moment M_q = sum_i w_i |x_i|^q and its q-th root."""

    q: float
    value: float
    root: float


def uniform_empirical(points) -> WeightedEmpiricalMeasure:
    """Empirical measure (1/N) sum_i delta_{x_i}; duplicates stay distinct atoms."""
    support = as_points(points)
    n = support.shape[0]
    return WeightedEmpiricalMeasure(support, np.full(n, 1.0 / n))


def truncated_cost(x, y) -> float:
    """min(|x - y|, 1): the Euclidean distance truncated at one."""
    xa = np.asarray(x, dtype=float).reshape(-1)
    ya = np.asarray(y, dtype=float).reshape(-1)
    if xa.shape != ya.shape:
        raise ValueError(f"dimension mismatch: {xa.shape} vs {ya.shape}")
    return min(float(np.linalg.norm(xa - ya)), 1.0)


def moment_q(mu: WeightedEmpiricalMeasure, q: float) -> MomentReport:
    """Weighted q-th absolute moment of ``mu`` for q >= 1."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    norms = np.linalg.norm(mu.support, axis=1)
    value = float(np.dot(mu.weights, norms**q))
    return MomentReport(q=float(q), value=value, root=value ** (1.0 / q))


def reweight_by_fitness(mu: WeightedEmpiricalMeasure, fitness) -> WeightedEmpiricalMeasure:
    """Tilt the weights by a strictly positive fitness: w_i F(x_i) / sum_j w_j F(x_j).

    ``fitness`` is any callable mapping an (n, d) array to n positive values.
    The support is unchanged.
    """
    values = np.asarray(fitness(mu.support), dtype=float).reshape(-1)
    if values.shape[0] != mu.n_atoms:
        raise ValueError("fitness returned wrong number of values")
    if (values <= 0).any():
        raise ValueError("fitness must be strictly positive on the support")
    w = mu.weights * values
    return WeightedEmpiricalMeasure(mu.support, w / w.sum())


def save_measure(mu: WeightedEmpiricalMeasure, path) -> None:
    """Write one atom per line: ``weight coord_1 ... coord_d``, full precision."""
    with open(path, "w") as fh:
        for w, x in zip(mu.weights, mu.support):
            fh.write(" ".join([repr(float(w))] + [repr(float(c)) for c in x]) + "\n")


def load_measure(path) -> WeightedEmpiricalMeasure:
    """Read the flat text format written by :func:`save_measure`."""
    weights = []
    points = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ValueError(f"{path}:{line_no}: expected 'weight coord_1 ... coord_d'")
            weights.append(float(parts[0]))
            points.append([float(p) for p in parts[1:]])
    if not points:
        raise ValueError(f"{path}: empty measure file")
    dims = {len(p) for p in points}
    if len(dims) != 1:
        raise ValueError(f"{path}: inconsistent point dimensions {sorted(dims)}")
    return WeightedEmpiricalMeasure(np.asarray(points), np.asarray(weights))
