"""Simplex geometry, integer population states and trajectory containers.

Population states are held as integer counts so that the sum-to-N invariant
is exact; fractions are derived on demand. Every container here is
immutable after construction (arrays are flagged read-only).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyPopulation, InvalidParameter, NegativeCount

SIMPLEX_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """Point of the probability simplex: non-negative fractions summing to one."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise DimensionMismatch(f"simplex point must be a non-empty vector, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidParameter("simplex point has non-finite coordinates")
        if np.any(c < -SIMPLEX_TOL) or np.any(c > 1 + SIMPLEX_TOL):
            raise InvalidParameter(f"coordinates outside [0, 1]: {c}")
        if abs(c.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidParameter(f"coordinates sum to {c.sum()!r}, not 1")
        object.__setattr__(self, "coords", _frozen(c))

    @property
    def n(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, SimplexPoint):
            return NotImplemented
        return np.array_equal(self.coords, other.coords)

    def __repr__(self):
        return f"SimplexPoint({np.array2string(self.coords, precision=6)})"

    def distance(self, other: "SimplexPoint | Sequence[float]") -> float:
        return float(np.linalg.norm(self.coords - as_coords(other)))

    @classmethod
    def uniform(cls, n: int) -> "SimplexPoint":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def vertex(cls, n: int, i: int) -> "SimplexPoint":
        c = np.zeros(n)
        c[i] = 1.0
        return cls(c)


@dataclass(frozen=True, eq=False)
class DiscretePopulationState:
    """Integer strategy counts of a population of ``population_size`` agents."""

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size == 0:
            raise DimensionMismatch(f"counts must be a non-empty vector, got shape {raw.shape}")
        c = raw.astype(np.int64)
        if not np.array_equal(c, raw):
            raise InvalidParameter(f"counts must be integers: {raw}")
        if np.any(c < 0):
            raise NegativeCount(f"negative strategy count in {c.tolist()}")
        if c.sum() == 0:
            raise EmptyPopulation("all strategy counts are zero")
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def population_size(self) -> int:
        return int(self.counts.sum())

    @property
    def n(self) -> int:
        return self.counts.size

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.population_size

    def __eq__(self, other):
        if not isinstance(other, DiscretePopulationState):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(tuple(self.counts.tolist()))

    def __repr__(self):
        return f"DiscretePopulationState({self.counts.tolist()}, N={self.population_size})"


def make_population_state(counts: Sequence[int]) -> DiscretePopulationState:
    """Build a population state from integer counts; N is their sum."""
    return DiscretePopulationState(np.asarray(counts))


def to_simplex_point(state: DiscretePopulationState) -> SimplexPoint:
    return SimplexPoint(state.fractions)


def even_counts(N: int, n: int) -> np.ndarray:
    """Spread ``N`` agents over ``n`` strategies as evenly as integers allow.

    The first ``N % n`` strategies receive one extra agent.
    """
    if N < 1 or n < 1:
        raise InvalidParameter("N and n must be positive")
    c = np.full(n, N // n, dtype=np.int64)
    c[: N % n] += 1
    return c


def as_coords(x) -> np.ndarray:
    """Return a float vector for a SimplexPoint, state or array-like."""
    if isinstance(x, SimplexPoint):
        return x.coords
    if isinstance(x, DiscretePopulationState):
        return x.fractions
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class JumpTrajectory:
    """Right-continuous, piecewise-constant sample path of the population process.

    ``times[k]`` is the k-th revision time and ``counts[k]`` the state right
    after it. Revisions in which the agent keeps its strategy are recorded
    too, so consecutive rows may be equal.
    """

    initial_state: DiscretePopulationState
    times: np.ndarray
    counts: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.counts, dtype=np.int64).reshape(len(t), self.initial_state.n)
        if self.horizon <= 0:
            raise InvalidParameter("horizon must be positive")
        if t.size:
            if t[0] < 0 or t[-1] > self.horizon or np.any(np.diff(t) <= 0):
                raise InvalidParameter("event times must be strictly increasing within [0, horizon]")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def N(self) -> int:
        return self.initial_state.population_size

    @property
    def jump_count(self) -> int:
        return self.times.size

    @property
    def events(self) -> Iterator[tuple[float, DiscretePopulationState]]:
        for t, c in zip(self.times, self.counts):
            yield float(t), DiscretePopulationState(c)

    def all_counts(self) -> np.ndarray:
        """Initial state stacked on top of the post-jump states."""
        return np.vstack([self.initial_state.counts[None, :], self.counts])


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """Memory-light record of a run: states at requested times plus jump count."""

    initial_state: DiscretePopulationState
    times: np.ndarray
    counts: np.ndarray
    horizon: float
    jump_count: int

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(np.asarray(self.times, dtype=float)))
        object.__setattr__(self, "counts", _frozen(np.asarray(self.counts, dtype=np.int64)))

    @property
    def N(self) -> int:
        return self.initial_state.population_size


@dataclass(frozen=True, eq=False)
class GridTrajectory:
    """Mean-dynamics solution on the uniform grid ``0, h, 2h, ..., horizon``."""

    times: np.ndarray
    states: np.ndarray
    step: float
    max_renorm_delta: float = 0.0
    renorm_deltas: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or s.shape[0] != t.size:
            raise DimensionMismatch("times and states disagree in length")
        if t[0] != 0.0:
            raise InvalidParameter("grid must start at time 0")
        if np.any(s < -SIMPLEX_TOL) or np.any(np.abs(s.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise InvalidParameter("grid state left the simplex")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "states", _frozen(s))
        if self.renorm_deltas is not None:
            object.__setattr__(self, "renorm_deltas", _frozen(self.renorm_deltas))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def point(self, k: int) -> SimplexPoint:
        return SimplexPoint(self.states[k])

    def interpolate(self, t) -> np.ndarray:
        """Piecewise-linear interpolation of the grid solution at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor(t / self.step).astype(np.int64), 0, self.times.size - 2)
        t0 = self.times[idx]
        t1 = self.times[idx + 1]
        w = ((t - t0) / (t1 - t0))[..., None]
        return (1.0 - w) * self.states[idx] + w * self.states[idx + 1]


def write_counts_csv(path_or_file, times, counts) -> None:
    """Write ``time,count_1..count_n`` rows with a header."""
    counts = np.asarray(counts)
    header = ["time"] + [f"count_{i + 1}" for i in range(counts.shape[1])]
    _write_rows(path_or_file, header, ([repr(float(t))] + [str(int(v)) for v in row]
                                       for t, row in zip(times, counts)))


def write_grid_csv(path_or_file, traj: GridTrajectory) -> None:
    """Write ``time,x_1..x_n`` rows with a header."""
    header = ["time"] + [f"x_{i + 1}" for i in range(traj.n)]
    _write_rows(path_or_file, header, ([repr(float(t))] + [repr(float(v)) for v in row]
                                       for t, row in zip(traj.times, traj.states)))


def _write_rows(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        _write_rows(fh, header, rows)
