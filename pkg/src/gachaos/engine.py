"""The genetic-algorithm particle system in auxiliary-random-variable form.

One sweep maps the population X_n to X_{n+1} particle by particle:

    X'_i = (1 - gate_i) X_i
         + gate_i ((1 - gamma_i) * X_{j(w, alpha1_i)} + gamma_i * X_{j(w, alpha2_i)} + sigma xi_i)

where w are the fitness-proportional weights of the step-n population, all
parents are read from the step-n state (synchronous update), and the five
draws per particle (gamma, xi, gate, alpha1, alpha2) are mutually
independent. Keeping the draws explicit lets the coupled reference system
replay exactly the same randomness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rng import stream

__all__ = [
    "SimParams",
    "PopulationState",
    "AuxiliaryDraws",
    "GATrajectory",
    "fitness_weights",
    "index_map",
    "parent_indices",
    "draw_auxiliaries",
    "ga_step",
    "run",
]

# variable-slot tags inside a (replica, step) stream path
SLOT_INIT = 0
SLOT_STEP = 1


@dataclass(frozen=True)
class SimParams:
    """Static parameters of one particle-system run."""

    n_particles: int
    tau: float
    sigma: float
    n_max: int
    dim: int
    seed: int

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


@dataclass(frozen=True)
class PopulationState:
    """Positions at step n and their fitness-proportional weights."""

    step: int
    positions: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,), strictly positive, sums to 1


@dataclass(frozen=True)
class AuxiliaryDraws:
    """The five independent draws per particle driving one sweep."""

    gamma: np.ndarray  # (N, d) in [0, 1]
    xi: np.ndarray  # (N, d) standard normal
    gate: np.ndarray  # (N,) in {0, 1}
    alpha1: np.ndarray  # (N,) in [0, index_size)
    alpha2: np.ndarray  # (N,) in [0, index_size)


@dataclass(frozen=True)
class GATrajectory:
    """States 0..n_max plus the draw history for coupled replays."""

    params: SimParams
    states: list
    draws: list


def fitness_weights(positions: np.ndarray, fitness) -> np.ndarray:
    """w_i = F(x_i) / sum_l F(x_l); strictly positive by the fitness contract."""
    values = np.asarray(fitness(positions), dtype=float)
    if (values <= 0).any():
        raise ValueError("fitness must be strictly positive on the population")
    return values / values.sum()


def _checked_cumulative(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if (w <= 0).any():
        raise ValueError("weights must be strictly positive (open simplex)")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {w.sum()!r}, not a simplex vector")
    n = w.size
    cum = np.cumsum(w) * n
    cum[-1] = n  # guard: alpha close to N must stay matchable
    return cum


def index_map(w, alpha: float) -> int:
    """Smallest 1-based j with alpha < N * (w_1 + ... + w_j).

    For alpha uniform on [0, N) this selects index k with probability w_k.
    Ties at cumulative boundaries resolve to the larger index (the
    inequality is strict).
    """
    cum = _checked_cumulative(w)
    n = cum.size
    if not 0.0 <= alpha < n:
        raise ValueError(f"alpha must lie in [0, {n}), got {alpha}")
    return int(np.searchsorted(cum, alpha, side="right")) + 1


def parent_indices(w: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Vectorized 0-based version of :func:`index_map` for engine internals."""
    cum = _checked_cumulative(w)
    return np.searchsorted(cum, alphas, side="right")


def draw_auxiliaries(gen: np.random.Generator, params: SimParams,
                     index_size: Optional[int] = None) -> AuxiliaryDraws:
    """Draw the 5N auxiliary variables for one sweep from ``gen``.

    ``index_size`` is the size of the index space the alpha draws address;
    it defaults to the particle count and only differs when a population is
    driven by parents sampled from another measure's atom list.
    """
    n, d = params.n_particles, params.dim
    m = n if index_size is None else int(index_size)
    gamma = gen.random(size=(n, d))
    xi = gen.standard_normal(size=(n, d))
    gate = (gen.random(size=n) < params.tau).astype(np.int8)
    alpha1 = gen.random(size=n) * m
    alpha2 = gen.random(size=n) * m
    return AuxiliaryDraws(gamma=gamma, xi=xi, gate=gate, alpha1=alpha1, alpha2=alpha2)


def ga_step(state: PopulationState, draws: AuxiliaryDraws, fitness,
            params: SimParams) -> PopulationState:
    """One synchronous sweep: all parents are read from the step-n state."""
    x = state.positions
    j1 = parent_indices(state.weights, draws.alpha1)
    j2 = parent_indices(state.weights, draws.alpha2)
    offspring = (1.0 - draws.gamma) * x[j1] + draws.gamma * x[j2] + params.sigma * draws.xi
    gate = draws.gate[:, None].astype(bool)
    new_x = np.where(gate, offspring, x)
    return PopulationState(step=state.step + 1, positions=new_x,
                           weights=fitness_weights(new_x, fitness))


def initial_state(params: SimParams, fitness, initial, *, stream_path=()) -> PopulationState:
    gen = stream(params.seed, *stream_path, SLOT_INIT, 0)
    x0 = initial.sample(gen, params.n_particles, params.dim)
    return PopulationState(step=0, positions=x0, weights=fitness_weights(x0, fitness))


def run(params: SimParams, fitness, initial, *, stream_path=(),
        keep_draws: bool = True) -> GATrajectory:
    """Run the system for n_max sweeps; deterministic given seed and path.

    Each step's draws come from the stream addressed by
    (seed, *stream_path, SLOT_STEP, step), so replicas and steps can be
    recomputed independently and the draw history can be replayed by the
    coupled reference system.
    """
    state = initial_state(params, fitness, initial, stream_path=stream_path)
    states = [state]
    history = []
    for n in range(params.n_max):
        gen = stream(params.seed, *stream_path, SLOT_STEP, n)
        draws = draw_auxiliaries(gen, params)
        state = ga_step(state, draws, fitness, params)
        states.append(state)
        if keep_draws:
            history.append(draws)
    return GATrajectory(params=params, states=states, draws=history)
