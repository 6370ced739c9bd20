"""Experiment configuration: INI-style files with typed, validated fields.

The dialect is the stdlib ``configparser`` one: named sections of
``key = value`` lines, ``#``/``;`` comments, case-insensitive keys. Lists
are comma-separated. Certified fitness constants are always recomputed from
the declared kind and parameters, never read from the file.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace

from .fitness import make_fitness
from .initial import make_initial

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "config_hash"]


class ConfigError(ValueError):
    """Invalid or missing configuration value; names the offending field."""

    def __init__(self, fieldname: str, message: str):
        self.fieldname = fieldname
        super().__init__(f"{fieldname}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    fitness_kind: str
    fitness_params: dict
    init_kind: str
    init_params: dict
    dim: int
    sigma: float
    tau: float
    horizon: float  # time horizon T; n_max = round(T / tau)
    seed: int
    q: float
    n_list: tuple
    replicas: int
    reference: str  # "grid" | "ensemble"
    grid_m: int
    ensemble_factor: int
    tau_list: tuple
    n_particles: int
    snapshot_stride: int  # 0 = auto (1 up to 200 steps, else 5)
    suite_cases: int
    draws: int
    threads: int
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_max(self) -> int:
        return int(round(self.horizon / self.tau))

    def stride_for(self, n_max: int) -> int:
        if self.snapshot_stride > 0:
            return self.snapshot_stride
        return 1 if n_max <= 200 else 5

    def make_fitness(self):
        params = dict(self.fitness_params)
        if self.fitness_kind == "reciprocal_rastrigin":
            params.setdefault("dim", self.dim)
        return make_fitness(self.fitness_kind, **params)

    def make_initial(self):
        return make_initial(self.init_kind, **self.init_params)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


def _floats(raw: str) -> tuple:
    return tuple(float(part) for part in raw.replace(",", " ").split())


def _ints(raw: str) -> tuple:
    values = _floats(raw)
    out = tuple(int(round(v)) for v in values)
    if any(abs(a - b) > 0 for a, b in zip(out, values)):
        raise ValueError("expected integers")
    return out


def _section_params(parser, section: str, skip=("kind",)) -> dict:
    if not parser.has_section(section):
        return {}
    out = {}
    for key, value in parser.items(section):
        if key in skip:
            continue
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}", f"not a number: {value!r}") from exc
    return out


def _get(parser, section, key, cast, default=None, required=False):
    fieldname = f"{section}.{key}"
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(fieldname, "required key is missing")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(fieldname, f"cannot parse {raw!r}") from exc


def parse_config(path) -> ExperimentConfig:
    """Load, type, and validate an experiment configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError("config", f"cannot read {path}")

    fitness_kind = _get(parser, "fitness", "kind", str, required=True)
    fitness_params = _section_params(parser, "fitness")
    init_kind = _get(parser, "init", "kind", str, default="gauss")
    init_params = _section_params(parser, "init")

    dim = _get(parser, "run", "dim", int, required=True)
    tau = _get(parser, "run", "tau", float, required=True)
    horizon = _get(parser, "run", "t", float, required=True)
    sigma = _get(parser, "run", "sigma", float, default=0.25)
    seed = _get(parser, "run", "seed", int, default=0)
    q = _get(parser, "run", "q", float, default=4.0)

    n_list = _get(parser, "experiment", "n_list", _ints, required=True)
    replicas = _get(parser, "experiment", "replicas", int, default=10)
    reference = _get(parser, "experiment", "reference", str,
                     default="grid" if dim == 1 else "ensemble")
    grid_m = _get(parser, "experiment", "grid_m", int, default=1024)
    ensemble_factor = _get(parser, "experiment", "ensemble_factor", int, default=100)
    tau_list = _get(parser, "experiment", "tau_list", _floats, default=())
    n_particles = _get(parser, "experiment", "n_particles", int,
                       default=n_list[-1] if n_list else 256)
    snapshot_stride = _get(parser, "experiment", "snapshot_stride", int, default=0)
    suite_cases = _get(parser, "experiment", "suite_cases", int, default=1000)
    draws = _get(parser, "experiment", "draws", int, default=100_000)
    threads = _get(parser, "experiment", "threads", int, default=0)

    if dim < 1:
        raise ConfigError("run.dim", f"must be >= 1, got {dim}")
    if not 0.0 < tau <= 1.0:
        raise ConfigError("run.tau", f"must lie in (0, 1], got {tau}")
    if horizon <= 0:
        raise ConfigError("run.T", f"must be positive, got {horizon}")
    if sigma < 0:
        raise ConfigError("run.sigma", f"must be nonnegative, got {sigma}")
    if q < 1:
        raise ConfigError("run.q", f"must be >= 1, got {q}")
    if not n_list:
        raise ConfigError("experiment.n_list", "must be nonempty")
    if any(n < 1 for n in n_list):
        raise ConfigError("experiment.n_list", "population sizes must be >= 1")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("experiment.n_list",
                          f"must be strictly increasing without duplicates, got {n_list}")
    if replicas < 1:
        raise ConfigError("experiment.replicas", "must be >= 1")
    if reference not in ("grid", "ensemble"):
        raise ConfigError("experiment.reference", f"must be grid or ensemble, got {reference!r}")
    if reference == "grid" and dim != 1:
        raise ConfigError("experiment.reference", "grid reference requires dim = 1")
    if grid_m < 2:
        raise ConfigError("experiment.grid_m", "must be >= 2")
    if any(t <= 0 or t > 1 for t in tau_list):
        raise ConfigError("experiment.tau_list", f"entries must lie in (0, 1], got {tau_list}")
    if n_particles < 1:
        raise ConfigError("experiment.n_particles", "must be >= 1")

    raw = {f"{section}.{key}": parser.get(section, key)
           for section in parser.sections()
           for key in parser.options(section)}

    cfg = ExperimentConfig(
        fitness_kind=fitness_kind, fitness_params=fitness_params,
        init_kind=init_kind, init_params=init_params,
        dim=dim, sigma=sigma, tau=tau, horizon=horizon, seed=seed, q=q,
        n_list=tuple(n_list), replicas=replicas, reference=reference,
        grid_m=grid_m, ensemble_factor=ensemble_factor, tau_list=tuple(tau_list),
        n_particles=n_particles, snapshot_stride=snapshot_stride,
        suite_cases=suite_cases, draws=draws, threads=threads, raw=raw,
    )
    # fail early on bad fitness/init parameters so errors carry field names
    try:
        cfg.make_fitness()
    except (TypeError, ValueError) as exc:
        raise ConfigError("fitness", str(exc)) from exc
    try:
        cfg.make_initial()
    except (TypeError, ValueError) as exc:
        raise ConfigError("init", str(exc)) from exc
    return cfg


def config_hash(raw: dict) -> str:
    """Order-independent hash of the raw key-value pairs."""
    canonical = "\n".join(f"{k}={' '.join(str(v).split())}" for k, v in sorted(raw.items()))
    return hashlib.sha256(canonical.encode()).hexdigest()
