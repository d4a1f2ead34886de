"""Monte Carlo ensembles of the population process against its mean dynamics.

An ensemble runs M independent replicas from the same initial counts, each
on its own seed derived from a master seed, and compares every replica to
one shared ODE solution. Replicas are simulated in fixed chunks of
``CHUNK_SIZE``; chunks may go to worker processes, and results are
assembled by replica index, so the output does not depend on ``workers``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .certificates import DeviationBoundReport, variance_bound
from .core import DiscretePopulationState, GridTrajectory, JumpTrajectory
from .engine import ModelSpec, derive_seed, run_batch
from .errors import HorizonMismatch, InvalidParameter, OutOfRange, TooFewReplicas
from .meanfield import field_max_norm, solve_mean_ode

log = logging.getLogger(__name__)

CHUNK_SIZE = 128


def sup_deviation(jump_traj: JumpTrajectory, ode_traj: GridTrajectory,
                  max_norm: float) -> tuple[float, float]:
    """Sup over [0, T] of the l2 gap between a sample path and the ODE solution.

    ``raw`` checks every ODE grid time and both sides of every jump, with the
    ODE linearly interpolated at jump times. Between checkpoints the path is
    constant and the ODE moves at speed at most ``max_norm``, so
    ``raw + max_norm * step`` is a conservative value for the true sup.
    """
    if abs(jump_traj.horizon - ode_traj.horizon) > 1e-9 * max(1.0, jump_traj.horizon):
        raise HorizonMismatch(
            f"path horizon {jump_traj.horizon} differs from ODE horizon {ode_traj.horizon}")
    N = jump_traj.N
    k = np.searchsorted(jump_traj.times, ode_traj.times, side="right")
    path = jump_traj.all_counts() / N
    gaps = [np.linalg.norm(path[k] - ode_traj.states, axis=1)]
    if jump_traj.jump_count:
        x_ode = ode_traj.interpolate(jump_traj.times)
        gaps.append(np.linalg.norm(path[1:] - x_ode, axis=1))
        gaps.append(np.linalg.norm(path[:-1] - x_ode, axis=1))
    raw = float(max(g.max() for g in gaps))
    return raw, raw + max_norm * ode_traj.step


def clopper_pearson(k: int, M: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial confidence interval for k successes in M trials."""
    if M < 1 or not 0 <= k <= M:
        raise InvalidParameter(f"need 0 <= k <= M and M >= 1, got k={k}, M={M}")
    a = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, M - k + 1))
    hi = 1.0 if k == M else float(stats.beta.ppf(1 - a / 2, k + 1, M - k))
    return lo, hi


@dataclass(frozen=True, eq=False)
class ReplicaEnsemble:
    config: dict
    N: int
    initial_counts: np.ndarray
    master_seed: int
    seeds: np.ndarray
    jumps: np.ndarray
    sup_raw: np.ndarray
    sup_conservative: np.ndarray
    report_times: np.ndarray
    samples: np.ndarray
    ode: GridTrajectory = field(repr=False)
    max_norm: float = 0.0

    @property
    def M(self) -> int:
        return int(self.seeds.size)

    @property
    def config_digest(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def results_digest(self) -> str:
        h = hashlib.sha256(self.config_digest.encode())
        for a in (self.seeds, self.jumps, self.sup_raw, self.sup_conservative, self.samples):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def _run_chunk(model, N, counts, horizon, seeds, report_times, ode):
    res = run_batch(model, N, counts, horizon, seeds, sample_times=report_times, ode=ode)
    return res.jumps, res.sup_raw, res.samples


def run_replicas(model: ModelSpec, N: int, x0, horizon: float, M: int, master_seed: int,
                 ode_step: float, *, report_times: Sequence[float] = (), workers: int = 1,
                 max_norm: Optional[float] = None, ode: Optional[GridTrajectory] = None,
                 config: Optional[dict] = None) -> ReplicaEnsemble:
    """Run ``M`` replicas and measure each one's sup-deviation from the shared ODE path."""
    if M < 1:
        raise InvalidParameter("replica count M must be >= 1")
    if not isinstance(x0, DiscretePopulationState):
        x0 = DiscretePopulationState(np.asarray(x0))
    if x0.population_size != N:
        raise InvalidParameter(f"initial counts sum to {x0.population_size}, expected N={N}")
    if ode is None:
        ode = solve_mean_ode(model, x0.fractions, horizon, ode_step)
    if max_norm is None:
        max_norm = field_max_norm(model)
    report_times = np.asarray(sorted(report_times), dtype=float)
    seeds = np.array([derive_seed(master_seed, r) for r in range(M)], dtype=np.uint64)
    if np.unique(seeds).size != M:
        raise InvalidParameter("derived replica seeds collide; choose another master seed")

    chunks = [seeds[s:s + CHUNK_SIZE].tolist() for s in range(0, M, CHUNK_SIZE)]
    args = [(model, N, x0.counts, horizon, c, report_times, ode) for c in chunks]
    workers = max(1, int(workers))
    if workers == 1 or len(chunks) == 1:
        parts = [_run_chunk(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            parts = list(pool.map(_run_chunk, *zip(*args)))
    jumps = np.concatenate([p[0] for p in parts])
    sup = np.concatenate([p[1] for p in parts])
    samples = np.concatenate([p[2] for p in parts])

    cfg = dict(config or {})
    cfg.update({"model": model.to_dict(), "N": int(N), "initial_counts": x0.counts.tolist(),
                "horizon": float(horizon), "M": int(M), "master_seed": int(master_seed),
                "ode_step": float(ode.step), "report_times": report_times.tolist()})
    return ReplicaEnsemble(cfg, int(N), x0.counts, int(master_seed), seeds, jumps, sup,
                           sup + max_norm * ode.step, report_times, samples, ode, float(max_norm))


@dataclass(frozen=True)
class ExceedanceReport:
    epsilon: float
    count: int
    M: int
    frequency: float
    ci_lo: float
    ci_hi: float
    bound: DeviationBoundReport
    verdict: str


def exceedance_report(ensemble: ReplicaEnsemble, epsilon: float,
                      bound: DeviationBoundReport) -> ExceedanceReport:
    """Compare the replica exceedance frequency with the theoretical bound.

    A replica exceeds when its conservative sup-deviation is >= ``epsilon``.
    The verdict is ``vacuous`` when the bound exceeds 1; otherwise
    ``consistent`` if the lower 95% Clopper-Pearson limit is at most the
    bound, ``violated`` if not.
    """
    M = ensemble.M
    k = int(np.sum(ensemble.sup_conservative >= epsilon))
    lo, hi = clopper_pearson(k, M)
    if bound.total > 1.0:
        verdict = "vacuous"
    elif lo <= bound.total:
        verdict = "consistent"
    else:
        verdict = "violated"
    return ExceedanceReport(float(epsilon), k, M, k / M, lo, hi, bound, verdict)


@dataclass(frozen=True)
class VarianceCurve:
    times: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray


def empirical_variance(ensemble: ReplicaEnsemble, times: Sequence[float]) -> VarianceCurve:
    """Total (trace) sample variance of the replica fractions at each report time.

    The standard error is that of the mean of squared distances to the
    ensemble mean, scaled by M/(M-1).
    """
    M = ensemble.M
    if M < 2:
        raise TooFewReplicas("empirical variance needs at least two replicas")
    times = np.asarray(times, dtype=float)
    var = np.empty(times.size)
    se = np.empty(times.size)
    for a, t in enumerate(times):
        hit = np.flatnonzero(np.abs(ensemble.report_times - t) <= 1e-12 * max(1.0, abs(t)))
        if hit.size == 0:
            raise OutOfRange(f"time {t} is not one of the ensemble's report times")
        C = ensemble.samples[:, hit[0], :]
        # exact integer sums of squares, so identical replicas give exactly 0
        Co = C.astype(object)
        s1 = Co.sum(axis=0)
        s2 = (Co * Co).sum(axis=0)
        num = sum(int(M * q - p * p) for p, q in zip(s1, s2))
        var[a] = num / (M * (M - 1) * ensemble.N ** 2)
        X = C / ensemble.N
        d2 = np.sum((X - X.mean(axis=0)) ** 2, axis=1)
        se[a] = d2.std(ddof=1) / math.sqrt(M) * M / (M - 1)
    return VarianceCurve(times, var, se)


def write_replicas_csv(path, ensemble: ReplicaEnsemble) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica_index", "seed", "jumps", "sup_raw", "sup_conservative"])
        for r in range(ensemble.M):
            w.writerow([r, int(ensemble.seeds[r]), int(ensemble.jumps[r]),
                        repr(float(ensemble.sup_raw[r])), repr(float(ensemble.sup_conservative[r]))])


def write_variance_csv(path, curve: VarianceCurve, N: int, lam: float, lipschitz: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "empirical_var", "stderr", "lemma1_bound"])
        for t, v, s in zip(curve.times, curve.variance, curve.stderr):
            w.writerow([repr(float(t)), repr(float(v)), repr(float(s)),
                        repr(variance_bound(N, lam, lipschitz, float(t)))])


def write_exceedance_csv(path, reports: Sequence[ExceedanceReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "count", "M", "freq", "ci_lo", "ci_hi", "bound_total", "verdict"])
        for r in reports:
            w.writerow([repr(r.epsilon), r.count, r.M, repr(r.frequency), repr(r.ci_lo),
                        repr(r.ci_hi), repr(float(r.bound.total)), r.verdict])
