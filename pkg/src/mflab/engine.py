"""Exact event-driven simulation of the finite-N population process.

The N agent clocks are merged into one Poisson clock of rate ``lam * N``.
At each tick the revising agent is a uniformly random agent (so its
strategy is i with probability x_i) and its new strategy is drawn from the
protocol's switching distribution at the pre-revision state.

Randomness: every run owns a Philox stream keyed by a 64-bit seed. Each
revision consumes exactly three uniforms from that stream (waiting time,
revising agent, target strategy), so a run's path depends only on its own
seed. Ensembles are simulated in fixed-size chunks of replicas stepped in
lockstep with numpy; chunking does not depend on the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (DiscretePopulationState, GridTrajectory, JumpTrajectory,
                   SampledTrajectory, SimplexPoint, write_counts_csv)
from .errors import DimensionMismatch, InvalidParameter, OutOfRange
from .games import GameSpec, payoff_batch
from .protocols import ProtocolSpec, check_row_sums, rates_batch

UNIFORMS_PER_EVENT = 3
_BLOCK = 512


@dataclass(frozen=True)
class ModelSpec:
    game: GameSpec
    protocol: ProtocolSpec

    @property
    def n(self) -> int:
        return self.game.n

    @property
    def lam(self) -> float:
        return self.protocol.lam

    def to_dict(self) -> dict:
        return {"game": self.game.to_dict(), "protocol": self.protocol.to_dict()}


def model_rates(model: ModelSpec, X: np.ndarray, check: bool = True):
    """Payoffs and validated rate matrices for a stack of states."""
    P = payoff_batch(model.game, X)
    T = rates_batch(model.protocol, X, P)
    if check:
        check_row_sums(model.protocol, T, X, P)
    return T, P


@dataclass(frozen=True)
class IntervalCountProbs:
    p0: float
    p1: float
    p2plus: float

    @property
    def m_n_delta(self) -> float:
        return self.p2plus


def interval_count_probs(N: int, lam: float, delta: float) -> IntervalCountProbs:
    """Probabilities of 0, 1 and at least 2 revisions in a window of length ``delta``."""
    if not (N >= 1 and lam > 0 and delta > 0):
        raise InvalidParameter(f"need N >= 1, lambda > 0, delta > 0; got {N}, {lam}, {delta}")
    mu = N * lam * delta
    p0 = math.exp(-mu)
    p1 = mu * p0
    if mu < 1e-2:
        # 1 - (1 + mu) e^-mu = sum_{k>=2} (-1)^k (k-1) mu^k / k!
        p2 = sum((-1) ** k * (k - 1) * mu ** k / math.factorial(k) for k in range(2, 12))
    else:
        p2 = -math.expm1(-mu) - p1
    return IntervalCountProbs(p0, p1, p2)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for one run."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of replica ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


class _Uniforms:
    """Per-run uniform streams served row by row for a lockstep batch."""

    def __init__(self, seeds: Sequence[int]):
        self.gens = [make_rng(s) for s in seeds]
        self.pos = _BLOCK

    def next(self) -> np.ndarray:
        if self.pos == _BLOCK:
            self.buf = np.stack([g.random((_BLOCK, UNIFORMS_PER_EVENT)) for g in self.gens])
            self.pos = 0
        row = self.buf[:, self.pos, :]
        self.pos += 1
        return row


@dataclass
class BatchResult:
    jumps: np.ndarray
    final_counts: np.ndarray
    samples: Optional[np.ndarray] = None
    sup_raw: Optional[np.ndarray] = None
    event_times: Optional[list] = None
    event_counts: Optional[list] = None


def _probe(times, idx, limit, mask, visit):
    """Visit every pending probe time strictly below ``limit`` for rows in ``mask``."""
    K = times.size
    while True:
        m = mask & (idx < K)
        if not m.any():
            return
        rows = np.flatnonzero(m)
        rows = rows[times[idx[rows]] < limit[rows]]
        if rows.size == 0:
            return
        visit(rows, idx[rows])
        idx[rows] += 1


def run_batch(model: ModelSpec, N: int, counts0, horizon: float, seeds: Sequence[int], *,
              sample_times=None, ode: Optional[GridTrajectory] = None,
              record_events: bool = False) -> BatchResult:
    """Simulate one run per seed in lockstep.

    ``sample_times`` records the (right-continuous) counts at those times.
    ``ode`` makes the kernel track the largest l2 distance between the path
    and the piecewise-linear ODE solution, checked at every grid time and
    on both sides of every jump.
    """
    counts0 = np.asarray(counts0, dtype=np.int64)
    n = counts0.size
    if n != model.n:
        raise DimensionMismatch(f"initial state has {n} strategies, model has {model.n}")
    if int(counts0.sum()) != N:
        raise InvalidParameter(f"initial counts sum to {int(counts0.sum())}, expected N={N}")
    if not horizon > 0:
        raise InvalidParameter("horizon must be positive")

    M = len(seeds)
    lam = model.lam
    rate = lam * N
    C = np.tile(counts0, (M, 1))
    t = np.zeros(M)
    jumps = np.zeros(M, dtype=np.int64)
    active = np.ones(M, dtype=bool)
    rows_all = np.arange(M)
    uniforms = _Uniforms(seeds)
    inf = np.full(M, np.inf)

    res = BatchResult(jumps=jumps, final_counts=C)

    if sample_times is not None:
        s_times = np.asarray(sample_times, dtype=float)
        if s_times.size and (np.any(np.diff(s_times) < 0) or s_times[0] < 0 or s_times[-1] > horizon):
            raise OutOfRange("sample times must be sorted and lie in [0, horizon]")
        s_idx = np.zeros(M, dtype=np.int64)
        samples = np.zeros((M, s_times.size, n), dtype=np.int64)
        res.samples = samples

        def take_sample(rows, k):
            samples[rows, k] = C[rows]

    if ode is not None:
        if abs(ode.horizon - horizon) > 1e-9 * max(1.0, horizon):
            raise InvalidParameter("ODE grid and simulation horizon differ")
        g_times = ode.times
        g_states = ode.states
        g_idx = np.zeros(M, dtype=np.int64)
        sup = np.zeros(M)
        res.sup_raw = sup

        def take_grid(rows, k):
            d = np.sqrt(np.sum((C[rows] / N - g_states[k]) ** 2, axis=1))
            sup[rows] = np.maximum(sup[rows], d)

    if record_events:
        ev_t = [[] for _ in range(M)]
        ev_c = [[] for _ in range(M)]
        res.event_times, res.event_counts = ev_t, ev_c

    while active.any():
        u = uniforms.next()
        tn = t - np.log1p(-u[:, 0]) / rate
        stepping = active & (tn <= horizon)
        finishing = active & ~stepping
        limit = np.where(finishing, inf, tn)
        if sample_times is not None:
            _probe(s_times, s_idx, limit, active, take_sample)
        if ode is not None:
            _probe(g_times, g_idx, limit, active, take_grid)
        active = stepping
        if not active.any():
            break

        x = C / N
        T, P = model_rates(model, x, check=False)
        check_row_sums(model.protocol, T[active], x[active], P[active])

        cum_counts = np.cumsum(C, axis=1)
        agent = np.minimum(np.floor(u[:, 1] * N).astype(np.int64), N - 1)
        i = np.sum(agent[:, None] >= cum_counts, axis=1)
        probs = T[rows_all, i] / lam
        probs[rows_all, i] = 0.0
        probs[rows_all, i] = 1.0 - probs.sum(axis=1)
        cum_p = np.cumsum(probs, axis=1)
        j = np.sum(u[:, 2:3] >= cum_p, axis=1)
        j = np.where(j >= n, i, j)

        move = active & (j != i)
        mr = np.flatnonzero(move)
        if ode is not None:
            ar = np.flatnonzero(active)
            x_ode = ode.interpolate(tn[ar])
            d_left = np.sqrt(np.sum((x[ar] - x_ode) ** 2, axis=1))
            sup[ar] = np.maximum(sup[ar], d_left)
        C[mr, i[mr]] -= 1
        C[mr, j[mr]] += 1
        if ode is not None:
            d_right = np.sqrt(np.sum((C[ar] / N - x_ode) ** 2, axis=1))
            sup[ar] = np.maximum(sup[ar], d_right)
        jumps[active] += 1
        t = np.where(active, tn, t)
        if record_events:
            for r in np.flatnonzero(active):
                ev_t[r].append(tn[r])
                ev_c[r].append(C[r].copy())
    return res


def _check_start(model: ModelSpec, N: int, x0) -> DiscretePopulationState:
    if not isinstance(x0, DiscretePopulationState):
        x0 = DiscretePopulationState(np.asarray(x0))
    if x0.population_size != N:
        raise InvalidParameter(f"initial state has population {x0.population_size}, expected N={N}")
    if x0.n != model.n:
        raise DimensionMismatch(f"initial state has {x0.n} strategies, model has {model.n}")
    return x0


def simulate(model: ModelSpec, N: int, x0, horizon: float, seed: int,
             sample_times=None):
    """Simulate one path of the population process on ``[0, horizon]``.

    Returns a :class:`JumpTrajectory` holding every revision, or, when
    ``sample_times`` is given, a :class:`SampledTrajectory` holding only the
    states at those times and the number of revisions.
    """
    x0 = _check_start(model, N, x0)
    if sample_times is not None:
        res = run_batch(model, N, x0.counts, horizon, [seed], sample_times=sample_times)
        return SampledTrajectory(x0, np.asarray(sample_times, dtype=float), res.samples[0],
                                 float(horizon), int(res.jumps[0]))
    res = run_batch(model, N, x0.counts, horizon, [seed], record_events=True)
    times = np.asarray(res.event_times[0], dtype=float)
    counts = np.asarray(res.event_counts[0], dtype=np.int64).reshape(times.size, model.n)
    return JumpTrajectory(x0, times, counts, float(horizon))


def counts_at(traj: JumpTrajectory, t: float) -> np.ndarray:
    if not 0.0 <= t <= traj.horizon:
        raise OutOfRange(f"time {t} outside [0, {traj.horizon}]")
    k = int(np.searchsorted(traj.times, t, side="right"))
    return traj.initial_state.counts if k == 0 else traj.counts[k - 1]


def state_at(traj: JumpTrajectory, t: float) -> SimplexPoint:
    """Right-continuous lookup: the state after the last revision at or before ``t``."""
    return SimplexPoint(counts_at(traj, t) / traj.N)


def write_trajectory_csv(path_or_file, traj) -> None:
    """CSV ``time,count_1..count_n``; a full path starts with the time-0 row."""
    if isinstance(traj, SampledTrajectory):
        write_counts_csv(path_or_file, traj.times, traj.counts)
        return
    write_counts_csv(path_or_file, np.concatenate([[0.0], traj.times]), traj.all_counts())


@dataclass(frozen=True)
class DriftEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    samples: int


def estimate_first_jump_drift(model: ModelSpec, N: int, x, samples: int, seed: int) -> DriftEstimate:
    """Monte Carlo estimate of ``lam*N * E[X(tau) - x]`` over the first revision.

    Each sample contributes ``lam * (e_j - e_i)``, which sums to zero
    exactly; per-coordinate standard errors are the sample standard
    deviation over ``sqrt(samples)``.
    """
    if samples < 1:
        raise InvalidParameter("samples must be >= 1")
    x = _check_start(model, N, x)
    xf = x.fractions
    T, _ = model_rates(model, xf)
    lam = model.lam
    n = model.n
    rng = make_rng(seed)
    U = rng.random((samples, 2))
    cum_counts = np.cumsum(x.counts)
    i = np.searchsorted(cum_counts, np.minimum(np.floor(U[:, 0] * N), N - 1), side="right")
    probs = T / lam
    probs[np.arange(n), np.arange(n)] = 0.0
    probs[np.arange(n), np.arange(n)] = 1.0 - probs.sum(axis=1)
    cum_p = np.cumsum(probs, axis=1)[i]
    j = np.sum(U[:, 1:2] >= cum_p, axis=1)
    j = np.where(j >= n, i, j)
    contrib = np.zeros((samples, n))
    contrib[np.arange(samples), j] += lam
    contrib[np.arange(samples), i] -= lam
    mean = contrib.mean(axis=0)
    if samples > 1:
        stderr = contrib.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        stderr = np.full(n, np.nan)
    return DriftEstimate(mean, stderr, samples)
