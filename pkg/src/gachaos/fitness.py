"""Fitness functions that are bounded, strictly positive, and globally Lipschitz.

Each spec carries certified constants: a positive lower bound ``f_lo``, an
upper bound ``f_hi``, and a Lipschitz constant ``lip``. Analytic kinds derive
them in closed form; the reciprocal Rastrigin wrapper certifies its Lipschitz
constant by dense numerical search over a documented box (a conservative
overestimate is always admissible for the stability constant below).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "ConstantFitness",
    "GaussianBump",
    "ReciprocalRastrigin",
    "FITNESS_KINDS",
    "make_fitness",
    "evaluate",
    "certified_constants",
    "c_f_constant",
]


def _as_batch(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[None, :]
    return arr


@dataclass(frozen=True)
class ConstantFitness:
    """F(x) = c for all x."""

    c: float = 1.0
    kind = "constant"

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("constant fitness must be strictly positive")

    @property
    def f_lo(self) -> float:
        return self.c

    @property
    def f_hi(self) -> float:
        return self.c

    @property
    def lip(self) -> float:
        return 0.0

    def __call__(self, x) -> np.ndarray:
        return np.full(_as_batch(x).shape[0], self.c)


@dataclass(frozen=True)
class GaussianBump:
    """F(x) = f_lo + (f_hi - f_lo) exp(-|x - center|^2 / (2 s^2)).

    Peak value f_hi at the center, floor f_lo in the tails. The Lipschitz
    constant is (f_hi - f_lo) / (s sqrt(e)), attained at radius s.
    """

    f_lo: float = 1.0
    f_hi: float = 2.0
    s: float = 1.0
    center: float = 0.0
    kind = "gaussian_bump"

    def __post_init__(self):
        if self.f_lo <= 0:
            raise ValueError("f_lo must be strictly positive")
        if self.f_hi < self.f_lo:
            raise ValueError("f_hi must be >= f_lo")
        if self.s <= 0:
            raise ValueError("width s must be positive")

    @property
    def lip(self) -> float:
        return (self.f_hi - self.f_lo) / (self.s * np.sqrt(np.e))

    def __call__(self, x) -> np.ndarray:
        arr = _as_batch(x)
        r2 = ((arr - self.center) ** 2).sum(axis=1)
        return self.f_lo + (self.f_hi - self.f_lo) * np.exp(-r2 / (2.0 * self.s**2))


def _rastrigin(arr: np.ndarray) -> np.ndarray:
    return (arr**2 - 10.0 * np.cos(2.0 * np.pi * arr) + 10.0).sum(axis=1)


def _rastrigin_grad(arr: np.ndarray) -> np.ndarray:
    return 2.0 * arr + 20.0 * np.pi * np.sin(2.0 * np.pi * arr)


@dataclass(frozen=True)
class ReciprocalRastrigin:
    """F(x) = f_lo + (1 - f_lo) / (1 + rastrigin(x)).

    Bounded in [f_lo, 1] with the maximizer at the origin, unlike the raw
    benchmark objective, which is neither bounded away from zero nor
    Lipschitz-certifiable. ``lip`` is certified by a dense gradient-norm
    search over the box [-cert_half_width, cert_half_width]^dim (inflated by
    five percent); the gradient decays like 1/|x|^3 outside, so the box
    bound is global.
    """

    f_lo: float = 0.5
    dim: int = 1
    cert_half_width: float = 6.0
    kind = "reciprocal_rastrigin"

    def __post_init__(self):
        if not 0 < self.f_lo < 1:
            raise ValueError("f_lo must lie in (0, 1)")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def f_hi(self) -> float:
        return 1.0

    @cached_property
    def lip(self) -> float:
        # |grad F| = (1 - f_lo) |grad ras| / (1 + ras)^2; search axis grids
        # plus a fixed pseudo-random cloud, then add a 5% safety margin.
        b = self.cert_half_width
        best = 0.0
        t = np.linspace(-b, b, 200_001)[:, None]
        for axis in range(min(self.dim, 1) or 1):
            pts = np.zeros((t.shape[0], self.dim))
            pts[:, axis : axis + 1] = t
            best = max(best, self._grad_norm_max(pts))
        if self.dim > 1:
            rng = np.random.default_rng(20240913)
            pts = rng.uniform(-b, b, size=(400_000, self.dim))
            best = max(best, self._grad_norm_max(pts))
            # refine around the incumbent with shrinking local clouds
            incumbent = pts[np.argmax(self._grad_norms(pts))]
            for scale in (0.1, 0.01, 0.001):
                local = incumbent + rng.normal(scale=scale, size=(100_000, self.dim))
                best = max(best, self._grad_norm_max(local))
                local_best = local[np.argmax(self._grad_norms(local))]
                incumbent = local_best
        return 1.05 * best

    def _grad_norms(self, pts: np.ndarray) -> np.ndarray:
        ras = _rastrigin(pts)
        g = _rastrigin_grad(pts)
        return (1.0 - self.f_lo) * np.linalg.norm(g, axis=1) / (1.0 + ras) ** 2

    def _grad_norm_max(self, pts: np.ndarray) -> float:
        return float(self._grad_norms(pts).max())

    def __call__(self, x) -> np.ndarray:
        arr = _as_batch(x)
        if arr.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {arr.shape[1]}")
        return self.f_lo + (1.0 - self.f_lo) / (1.0 + _rastrigin(arr))


FITNESS_KINDS = {
    "constant": ConstantFitness,
    "gaussian_bump": GaussianBump,
    "reciprocal_rastrigin": ReciprocalRastrigin,
}


def make_fitness(kind: str, **params):
    """Instantiate a registered fitness kind from its name and parameters."""
    try:
        cls = FITNESS_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown fitness kind {kind!r}; known: {sorted(FITNESS_KINDS)}")
    return cls(**params)


def evaluate(spec, x) -> float:
    """Evaluate a fitness spec at a single point."""
    return float(spec(x)[0])


def certified_constants(spec) -> tuple[float, float, float]:
    """Return (f_lo, f_hi, lip) for the spec."""
    return (float(spec.f_lo), float(spec.f_hi), float(spec.lip))


def c_f_constant(spec) -> float:
    """Stability constant of fitness reweighting in the truncated-cost metric.

    C_F = (1/f_lo) (1 + f_hi/f_lo) (lip + 2 f_hi).
    """
    f_lo, f_hi, lip = certified_constants(spec)
    return (1.0 / f_lo) * (1.0 + f_hi / f_lo) * (lip + 2.0 * f_hi)
