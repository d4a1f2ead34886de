"""TOML experiment configuration.

Example::

    [game]
    builtin = "rps"              # or type = "matrix" / "congestion"

    [protocol]
    name = "smith"
    lambda = 4.0

    [population]
    N = [100, 1000]
    initial_counts = "even"      # or [34, 33, 33], or a table keyed by N

    [run]
    horizon = 1.0
    ode_step = 0.001
    report_times = [0.25, 0.5, 1.0]
    epsilon = [0.1, 0.2]
    replicas = 500
    seed = 12345
    out = "results"
    plots = true

    [constants]                  # all optional
    grid_resolution = 40
    safety_factor = 1.5
    samples = 10000
    # lipschitz = 2.0
    # max_norm = 1.5
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import even_counts
from .engine import ModelSpec
from .errors import ConfigError, MflabError
from .games import GameSpec, builtin_game, congestion_game, matrix_game
from .meanfield import DEFAULT_GRID_RESOLUTION, DEFAULT_SAFETY_FACTOR, DEFAULT_SAMPLES
from .protocols import ProtocolSpec


@dataclass
class ExperimentConfig:
    model: ModelSpec
    N_list: list[int]
    initial_counts: dict[int, np.ndarray]
    horizon: float = 1.0
    ode_step: float = 0.01
    report_times: list[float] = field(default_factory=list)
    epsilons: list[float] = field(default_factory=lambda: [0.1])
    replicas: int = 100
    seed: int = 0
    out: Optional[str] = None
    plots: bool = True
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    safety_factor: float = DEFAULT_SAFETY_FACTOR
    samples: int = DEFAULT_SAMPLES
    lipschitz: Optional[float] = None
    max_norm: Optional[float] = None
    raw: dict = field(default_factory=dict, repr=False)
    path: Optional[str] = None

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def _get(d: dict, key: str, kind, where: str, path, default: Any = ..., positive=False):
    if key not in d:
        if default is ...:
            raise ConfigError("missing required key", path, f"{where}.{key}")
        return default
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
        raise ConfigError(f"expected {kind.__name__}, got {v!r}", path, f"{where}.{key}")
    if positive and not v > 0:
        raise ConfigError(f"must be positive, got {v!r}", path, f"{where}.{key}")
    return v


def _as_list(v, kind, where, path, positive=True):
    items = v if isinstance(v, list) else [v]
    out = []
    for x in items:
        if kind is float and isinstance(x, int) and not isinstance(x, bool):
            x = float(x)
        if not isinstance(x, kind) or isinstance(x, bool):
            raise ConfigError(f"expected {kind.__name__} values, got {x!r}", path, where)
        if positive and not x > 0:
            raise ConfigError(f"values must be positive, got {x!r}", path, where)
        out.append(x)
    if not out:
        raise ConfigError("empty list", path, where)
    return out


def parse_game(d: dict, path=None) -> GameSpec:
    try:
        if "builtin" in d:
            return builtin_game(d["builtin"])
        kind = d.get("type")
        if kind == "matrix":
            return matrix_game(d["matrix"])
        if kind == "congestion":
            return congestion_game(d["slopes"], d.get("offsets", [0.0] * len(d["slopes"])))
    except KeyError as e:
        raise ConfigError(f"missing key {e.args[0]!r}", path, "game") from None
    except (MflabError, ValueError, TypeError) as e:
        raise ConfigError(str(e), path, "game") from None
    raise ConfigError("set either builtin or type = 'matrix' | 'congestion'", path, "game")


def parse_protocol(d: dict, path=None) -> ProtocolSpec:
    name = _get(d, "name", str, "protocol", path)
    lam = _get(d, "lambda", float, "protocol", path)
    eta = _get(d, "eta", float, "protocol", path, None)
    c = _get(d, "c", float, "protocol", path, None)
    try:
        return ProtocolSpec(name, lam, eta=eta, c=c)
    except MflabError as e:
        raise ConfigError(str(e), path, "protocol") from None


def config_from_dict(raw: dict, path=None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    for section in ("game", "protocol", "population"):
        if not isinstance(raw.get(section), dict):
            raise ConfigError("missing section", path, section)
    game = parse_game(raw["game"], path)
    protocol = parse_protocol(raw["protocol"], path)
    pop = raw["population"]
    if "N" not in pop:
        raise ConfigError("missing required key", path, "population.N")
    N_list = _as_list(pop["N"], int, "population.N", path)

    init = pop.get("initial_counts", "even")
    counts: dict[int, np.ndarray] = {}
    for N in N_list:
        if init == "even":
            c = even_counts(N, game.n)
        elif isinstance(init, list):
            c = np.asarray(init)
        elif isinstance(init, dict):
            if str(N) not in init:
                raise ConfigError(f"no initial counts for N={N}", path, "population.initial_counts")
            c = np.asarray(init[str(N)])
        else:
            raise ConfigError("expected 'even', a list, or a table keyed by N", path,
                              "population.initial_counts")
        if c.ndim != 1 or c.size != game.n or c.dtype.kind not in "iu":
            raise ConfigError(f"need {game.n} integer counts, got {c.tolist()}", path,
                              "population.initial_counts")
        if np.any(c < 0) or int(c.sum()) != N:
            raise ConfigError(f"counts {c.tolist()} must be non-negative and sum to N={N}", path,
                              "population.initial_counts")
        counts[N] = c.astype(np.int64)

    run = raw.get("run", {})
    const = raw.get("constants", {})
    cfg = ExperimentConfig(
        model=ModelSpec(game, protocol),
        N_list=N_list,
        initial_counts=counts,
        horizon=_get(run, "horizon", float, "run", path, 1.0, positive=True),
        ode_step=_get(run, "ode_step", float, "run", path, 0.01, positive=True),
        report_times=sorted(_as_list(run["report_times"], float, "run.report_times", path,
                                     positive=False)) if run.get("report_times") else [],
        epsilons=_as_list(run.get("epsilon", 0.1), float, "run.epsilon", path),
        replicas=_get(run, "replicas", int, "run", path, 100, positive=True),
        seed=_get(run, "seed", int, "run", path, 0),
        out=_get(run, "out", str, "run", path, None),
        plots=_get(run, "plots", bool, "run", path, True),
        grid_resolution=_get(const, "grid_resolution", int, "constants", path,
                             DEFAULT_GRID_RESOLUTION, positive=True),
        safety_factor=_get(const, "safety_factor", float, "constants", path,
                           DEFAULT_SAFETY_FACTOR, positive=True),
        samples=_get(const, "samples", int, "constants", path, DEFAULT_SAMPLES, positive=True),
        lipschitz=_get(const, "lipschitz", float, "constants", path, None),
        max_norm=_get(const, "max_norm", float, "constants", path, None),
        raw=raw,
        path=None if path is None else str(path),
    )
    for t in cfg.report_times:
        if not 0 <= t <= cfg.horizon:
            raise ConfigError(f"report time {t} outside [0, horizon]", path, "run.report_times")
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", path, "run.seed")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config file not found", p)
    try:
        with open(p, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}", p) from None
    return config_from_dict(raw, p)


def override(cfg: ExperimentConfig, **scalars) -> ExperimentConfig:
    """Rebuild ``cfg`` with scalar keys replaced, keeping the digest in sync."""
    raw = copy.deepcopy(cfg.raw)
    out = scalars.pop("out", None)
    where = {"horizon": "run", "ode_step": "run", "replicas": "run", "seed": "run",
             "plots": "run", "lambda": "protocol",
             "safety_factor": "constants", "grid_resolution": "constants",
             "lipschitz": "constants", "max_norm": "constants", "samples": "constants"}
    for k, v in scalars.items():
        if v is None:
            continue
        raw.setdefault(where[k], {})[k] = v
    new = config_from_dict(raw, cfg.path)
    if out is not None:
        new.out = out
    return new
