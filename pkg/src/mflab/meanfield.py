"""Mean dynamics ``x' = Phi(x)`` and the constants the deviation bound needs.

``Phi_i(x) = sum_j x_j T_ji(x, F(x)) - x_i sum_j T_ij(x, F(x))``, i.e.
inflow to i minus outflow from i.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import GridTrajectory, as_coords
from .engine import ModelSpec, model_rates
from .errors import DimensionMismatch, InvalidParameter, StepInvalid

log = logging.getLogger(__name__)

DEFAULT_SAFETY_FACTOR = 1.5
DEFAULT_GRID_RESOLUTION = 40
DEFAULT_SAMPLES = 10_000
MAX_LATTICE_POINTS = 200_000


def field_batch(model: ModelSpec, X: np.ndarray, check: bool = True) -> np.ndarray:
    """Phi evaluated on a stack of states of shape (..., n)."""
    T, _ = model_rates(model, X, check=check)
    inflow = np.einsum("...j,...ji->...i", X, T)
    outflow = X * T.sum(axis=-1)
    return inflow - outflow


def mean_vector_field(model: ModelSpec, x) -> np.ndarray:
    x = as_coords(x)
    if x.shape != (model.n,):
        raise DimensionMismatch(f"state has shape {x.shape}, model has {model.n} strategies")
    return field_batch(model, x)


def solve_mean_ode(model: ModelSpec, x0, horizon: float, step: float) -> GridTrajectory:
    """Classical RK4 on the uniform grid ``k * step``; ``horizon`` must be a multiple of ``step``.

    After every step the state is projected back to the simplex by clipping
    negatives and rescaling. The size of each correction is kept on the
    returned trajectory.
    """
    x0 = as_coords(x0).astype(float)
    if x0.shape != (model.n,):
        raise DimensionMismatch(f"initial state has shape {x0.shape}, model has {model.n} strategies")
    if not (step > 0 and horizon > 0):
        raise StepInvalid("step and horizon must be positive")
    if step > horizon:
        raise StepInvalid(f"step {step} exceeds horizon {horizon}")
    K = int(round(horizon / step))
    if abs(K * step - horizon) > 1e-9 * horizon:
        raise StepInvalid(f"horizon {horizon} is not a whole number of steps of {step}")

    f = lambda y: field_batch(model, y)
    states = np.empty((K + 1, model.n))
    deltas = np.zeros(K + 1)
    states[0] = x0
    x = x0
    h = step
    for k in range(K):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        y = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        z = np.clip(y, 0.0, None)
        z = z / z.sum()
        deltas[k + 1] = float(np.max(np.abs(z - y)))
        states[k + 1] = z
        x = z
    times = np.arange(K + 1) * step
    times[-1] = horizon
    worst = float(deltas.max())
    if worst > 0:
        log.debug("simplex renormalisation: max correction %.3e over %d steps", worst, K)
    return GridTrajectory(times, states, float(step), worst, deltas)


@dataclass(frozen=True)
class FieldConstants:
    lipschitz: float
    max_norm: float
    method: str
    grid_resolution: Optional[int] = None
    safety_factor: Optional[float] = None

    @property
    def heuristic(self) -> bool:
        return self.method != "analytic"

    def describe(self) -> str:
        if not self.heuristic:
            return "analytic"
        return (f"sampled(grid_resolution={self.grid_resolution}, "
                f"safety_factor={self.safety_factor:g}) heuristic")


def _analytic_lipschitz(model: ModelSpec) -> Optional[float]:
    v = model.protocol.variant
    if v == "null":
        return 0.0
    if v == "fixed_rate":
        # Phi = c * 1 - c * n * x
        return float(model.protocol.c * model.n)
    return None


def simplex_lattice(n: int, m: int) -> np.ndarray:
    """All points of the simplex with coordinates in {0, 1/m, ..., 1}."""
    pts = []
    for bars in itertools.combinations(range(m + n - 1), n - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(m + n - 2 - prev)
        pts.append(parts)
    return np.asarray(pts, dtype=float) / m


def _lattice_or_none(n: int, m: int) -> Optional[np.ndarray]:
    if math.comb(m + n - 1, n - 1) > MAX_LATTICE_POINTS:
        log.warning("lattice with n=%d, m=%d is too large; using random samples only", n, m)
        return None
    return simplex_lattice(n, m)


def _random_simplex(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n), size=size)


def sampled_lipschitz_quotient(model: ModelSpec, grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                               samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Largest observed ``|Phi(x)-Phi(y)| / |x-y|`` (no safety factor).

    Pairs: ``samples`` independent uniform pairs, ``samples`` nearby pairs
    at random scales, and lattice neighbours one cell apart.
    """
    n = model.n
    rng = np.random.default_rng(seed)
    X = _random_simplex(rng, samples, n)
    Y = _random_simplex(rng, samples, n)
    Z = _random_simplex(rng, samples, n)
    s = 10.0 ** rng.uniform(-4, -1, size=(samples, 1))
    W = (1 - s) * X + s * Z
    A = [X, X]
    B = [Y, W]
    L = _lattice_or_none(n, grid_resolution)
    if L is not None:
        h = 1.0 / grid_resolution
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                ok = L[:, i] >= h - 1e-12
                src = L[ok]
                dst = src.copy()
                dst[:, i] -= h
                dst[:, j] += h
                dst = np.clip(dst, 0.0, 1.0)
                A.append(src)
                B.append(dst)
    A = np.vstack(A)
    B = np.vstack(B)
    dx = np.linalg.norm(A - B, axis=1)
    keep = dx > 1e-14
    dphi = np.linalg.norm(field_batch(model, A[keep]) - field_batch(model, B[keep]), axis=1)
    return float(np.max(dphi / dx[keep])) if keep.any() else 0.0


def field_lipschitz(model: ModelSpec, method: str = "auto", *,
                    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                    safety_factor: float = DEFAULT_SAFETY_FACTOR,
                    samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Lipschitz constant of Phi on the simplex.

    ``method`` is ``"analytic"``, ``"sampled"`` or ``"auto"`` (analytic when
    a closed form is known for the protocol). The sampled value is the
    largest difference quotient times ``safety_factor``: a heuristic, since
    a sampled maximum only bounds the true constant from below.
    """
    if method not in ("auto", "analytic", "sampled"):
        raise InvalidParameter(f"unknown Lipschitz method {method!r}")
    if method in ("auto", "analytic"):
        exact = _analytic_lipschitz(model)
        if exact is not None:
            return exact
        if method == "analytic":
            raise InvalidParameter(f"no closed-form Lipschitz constant for {model.protocol.variant}")
    if safety_factor < 1:
        raise InvalidParameter("safety_factor must be >= 1")
    return safety_factor * sampled_lipschitz_quotient(model, grid_resolution, samples, seed)


def field_max_norm(model: ModelSpec, grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                   samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Max of ``|Phi(x)|_2`` over a simplex lattice plus random points."""
    if grid_resolution < 2:
        raise InvalidParameter("grid_resolution must be >= 2")
    rng = np.random.default_rng(seed)
    pts = [_random_simplex(rng, samples, model.n), np.full((1, model.n), 1.0 / model.n)]
    L = _lattice_or_none(model.n, grid_resolution)
    if L is not None:
        pts.append(L)
    else:
        pts.append(np.eye(model.n))
    P = np.vstack(pts)
    return float(np.max(np.linalg.norm(field_batch(model, P), axis=1)))


def field_constants(model: ModelSpec, method: str = "auto", *,
                    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                    safety_factor: float = DEFAULT_SAFETY_FACTOR,
                    samples: int = DEFAULT_SAMPLES, seed: int = 0) -> FieldConstants:
    lip = field_lipschitz(model, method, grid_resolution=grid_resolution,
                          safety_factor=safety_factor, samples=samples, seed=seed)
    mx = field_max_norm(model, grid_resolution, samples, seed)
    analytic = method != "sampled" and _analytic_lipschitz(model) is not None
    if analytic:
        return FieldConstants(lip, mx, "analytic")
    return FieldConstants(lip, mx, "sampled", grid_resolution, safety_factor)
