"""Optimal-coupling sampler between a reference measure and a weighted population.

Given a discrete reference measure f and a population (x, w) with strictly
positive weights, the sampler turns one uniform draw alpha in [0, N) into a
pair (x_star, partner) whose joint law is an optimal transport plan between
f and the weighted empirical measure of the population:

  1. alpha selects the partner atom j through the cumulative-weight index
     map, so P(partner = j) = w_j;
  2. the leftover position of alpha inside partner j's weight slot is
     rescaled to a uniform beta in [0, 1);
  3. beta drives the inverse CDF of the conditional distribution G_j of the
     optimal plan's column j, producing x_star.

Each conditional table orders reference atoms by construction index, so the
whole map is a deterministic piecewise-constant function of alpha, and the
plan itself is certified before any sampling happens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import index_map
from .measures import WeightedEmpiricalMeasure
from .transport import CostKind, TransportPlan, solve_ot, verify_plan

__all__ = [
    "CouplingSampler",
    "BetaRescale",
    "build_sampler",
    "self_sampler",
    "beta_rescale",
    "sample_xstar",
    "sample_xstar_many",
    "pairwise_cost",
    "coupling_cost_check",
]

#: per-atom tolerance for the mixture identity sum_i w_i G_i = f
MIXTURE_TOL = 1e-9


@dataclass(frozen=True)
class BetaRescale:
    """Selected 1-based index j and the in-slot uniform remainder beta."""

    j: int
    beta: float


@dataclass(frozen=True)
class CouplingSampler:
    """Realized optimal coupling between ``reference`` and a weighted population."""

    reference: WeightedEmpiricalMeasure
    positions: np.ndarray  # (N, d) population atoms
    weights: np.ndarray  # (N,) strictly positive simplex weights
    plan: TransportPlan
    cost: CostKind
    cond_atoms: tuple  # per population atom: reference-atom indices with mass
    cond_cdf: tuple  # per population atom: cumulative conditional probabilities

    @property
    def n_index(self) -> int:
        return self.weights.size

    def population_measure(self) -> WeightedEmpiricalMeasure:
        return WeightedEmpiricalMeasure(self.positions, self.weights)


def _cumulative(w: np.ndarray) -> np.ndarray:
    n = w.size
    cum = np.cumsum(w) * n
    cum[-1] = n
    return cum


def build_sampler(f_ref: WeightedEmpiricalMeasure, positions, w,
                  cost=CostKind.TRUNCATED) -> CouplingSampler:
    """Solve for an optimal plan and tabulate its conditional inverse CDFs.

    The population weights must be strictly positive (the conditionals are
    columns of the plan normalized by them). When the reference coincides
    with the population measure the diagonal zero-cost plan is used
    directly; otherwise the plan comes from the exact solver and is
    certified before tabulation.
    """
    kind = CostKind.coerce(cost)
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    w = np.asarray(w, dtype=float)
    if (w <= 0).any():
        raise ValueError("population weights must be strictly positive")
    pop = WeightedEmpiricalMeasure(positions, w)
    w = pop.weights

    if (f_ref.n_atoms == pop.n_atoms
            and np.array_equal(f_ref.support, pop.support)
            and np.array_equal(f_ref.weights, w)):
        plan = TransportPlan(mass=np.diag(w), cost_value=0.0,
                             dual_u=np.zeros(pop.n_atoms), dual_v=np.zeros(pop.n_atoms))
    else:
        plan = solve_ot(f_ref, pop, kind)
        ok, report = verify_plan(plan, f_ref, pop, kind)
        if not ok:
            raise RuntimeError(f"optimal plan failed certification: {report['violations']}")

    cond_atoms = []
    cond_cdf = []
    mixture = np.zeros(f_ref.n_atoms)
    for i in range(pop.n_atoms):
        col = plan.mass[:, i]
        total = col.sum()
        idx = np.flatnonzero(col > 0.0)
        if idx.size == 0 or total <= 0.0:
            raise RuntimeError(f"plan column {i} carries no mass (w_i = {w[i]!r})")
        probs = col[idx] / total
        cond_atoms.append(idx)
        cond_cdf.append(np.cumsum(probs))
        mixture[idx] += w[i] * probs
    drift = float(np.abs(mixture - f_ref.weights).max())
    if drift > MIXTURE_TOL:
        raise RuntimeError(f"conditional mixture misses the reference by {drift:.3e}")

    return CouplingSampler(reference=f_ref, positions=pop.support, weights=w,
                           plan=plan, cost=kind,
                           cond_atoms=tuple(cond_atoms), cond_cdf=tuple(cond_cdf))


def self_sampler(mu: WeightedEmpiricalMeasure, cost=CostKind.TRUNCATED) -> CouplingSampler:
    """Coupling of a measure with itself: plain inverse-CDF sampling of ``mu``.

    Zero-weight atoms are dropped first (they carry no mass and the
    population side requires strictly positive weights); the resulting plan
    is the diagonal, so each draw returns the selected atom itself.
    """
    keep = mu.weights > 0
    trimmed = WeightedEmpiricalMeasure(mu.support[keep], mu.weights[keep])
    return build_sampler(trimmed, trimmed.support, trimmed.weights, cost)


def beta_rescale(w, alpha: float) -> BetaRescale:
    """Map alpha in [0, N) to its index j and in-slot remainder beta in [0, 1)."""
    j = index_map(w, alpha)
    w = np.asarray(w, dtype=float)
    cum = _cumulative(w)
    left = cum[j - 2] if j >= 2 else 0.0
    width = cum[j - 1] - left
    beta = (float(alpha) - left) / width
    beta = min(max(beta, 0.0), np.nextafter(1.0, 0.0))
    return BetaRescale(j=j, beta=beta)


def sample_xstar(sampler: CouplingSampler, alpha: float):
    """Deterministic sample (x_star, partner) for one alpha in [0, N)."""
    br = beta_rescale(sampler.weights, alpha)
    i = br.j - 1
    pos = int(np.searchsorted(sampler.cond_cdf[i], br.beta, side="right"))
    pos = min(pos, sampler.cond_atoms[i].size - 1)
    ref_idx = sampler.cond_atoms[i][pos]
    return sampler.reference.support[ref_idx].copy(), br.j


def sample_xstar_many(sampler: CouplingSampler, alphas: np.ndarray):
    """Vectorized :func:`sample_xstar`.

    Returns ((n, d) sampled points, 0-based partner indices, 0-based
    reference-atom indices); the last output distinguishes duplicate
    reference atoms for joint-law diagnostics.
    """
    alphas = np.asarray(alphas, dtype=float)
    n = sampler.n_index
    if ((alphas < 0) | (alphas >= n)).any():
        raise ValueError(f"alpha values must lie in [0, {n})")
    cum = _cumulative(sampler.weights)
    j0 = np.searchsorted(cum, alphas, side="right")
    left = np.where(j0 >= 1, cum[np.maximum(j0 - 1, 0)], 0.0)
    width = cum[j0] - left
    beta = np.clip((alphas - left) / width, 0.0, np.nextafter(1.0, 0.0))
    ref_idx = np.empty(alphas.size, dtype=np.int64)
    for i in np.unique(j0):
        sel = j0 == i
        pos = np.searchsorted(sampler.cond_cdf[i], beta[sel], side="right")
        np.minimum(pos, sampler.cond_atoms[i].size - 1, out=pos)
        ref_idx[sel] = sampler.cond_atoms[i][pos]
    return sampler.reference.support[ref_idx], j0, ref_idx


def pairwise_cost(x: np.ndarray, y: np.ndarray, cost) -> np.ndarray:
    """Elementwise ground cost c(x_i, y_i) between matched point arrays."""
    kind = CostKind.coerce(cost)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if kind is CostKind.INDICATOR:
        return 1.0 - (x == y).all(axis=1).astype(float)
    dist = np.linalg.norm(x - y, axis=1)
    if kind is CostKind.TRUNCATED:
        np.minimum(dist, 1.0, out=dist)
    return dist


def coupling_cost_check(sampler: CouplingSampler, n_draws: int,
                        gen: np.random.Generator) -> float:
    """Monte Carlo mean of c(x_star, x_partner); converges to the plan cost."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    alphas = gen.random(size=n_draws) * sampler.n_index
    xstar, partners, _ = sample_xstar_many(sampler, alphas)
    return float(pairwise_cost(xstar, sampler.positions[partners], sampler.cost).mean())
