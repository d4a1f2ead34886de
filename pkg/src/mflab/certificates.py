"""Closed-form finite-N deviation bound and its ingredients.

For a model with clock rate ``lam``, field Lipschitz constant ``L`` and
field norm bound ``phi_max``::

    P(sup_{t<=T} |X^N(t) - x(t)|_2 >= eps)
        <= 9 lam l / (4 N eps^2 L) (exp(2 L T) - 1) + l H(T / l)

with ``l = 2 ceil(T e lam / eps)`` and
``H(tau) = exp(-lam N tau + 1) / 2^(ceil(N eps) - 1)``, valid once N
exceeds ``b = (2 T e^{LT} / eps (L + 2 phi_max lam / L (e^{2LT} - 1)))^3``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import InvalidParameter

# Below this log-value exp() underflows to 0 in double precision.
LOG_UNDERFLOW = -745.0
LIPSCHITZ_FLOOR = 1e-6


def _positive(**kw):
    for name, v in kw.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise InvalidParameter(f"{name} must be a positive finite number, got {v!r}")


def exact_ceil(v: float) -> int:
    """Ceiling that forgives rounding noise, e.g. 1000 * 0.3 -> 300, not 301."""
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, abs(v)):
        return int(r)
    return math.ceil(v)


def ell_star(horizon: float, lam: float, epsilon: float) -> int:
    """Number of quantisation cells of [0, T]: ``2 ceil(T e lam / eps)``."""
    _positive(horizon=horizon, lam=lam, epsilon=epsilon)
    return 2 * exact_ceil(horizon * math.e * lam / epsilon)


def log_tail_h(N: int, epsilon: float, lam: float, tau: float) -> float:
    _positive(N=N, epsilon=epsilon, lam=lam, tau=tau)
    k = exact_ceil(N * epsilon)
    return -lam * N * tau + 1.0 - (k - 1) * math.log(2.0)


def tail_h(N: int, epsilon: float, lam: float, tau: float) -> float:
    """Chernoff-type bound on seeing ``ceil(N eps)`` or more revisions within ``tau``."""
    lv = log_tail_h(N, epsilon, lam, tau)
    if lv < LOG_UNDERFLOW:
        return 0.0
    return math.exp(lv)


def n_threshold_b(horizon: float, epsilon: float, lam: float, lipschitz: float,
                  max_norm: float) -> float:
    """Population size above which the expected path stays within eps/2 of the ODE."""
    _positive(horizon=horizon, epsilon=epsilon, lam=lam, lipschitz=lipschitz)
    if not (math.isfinite(max_norm) and max_norm >= 0):
        raise InvalidParameter(f"max_norm must be >= 0, got {max_norm!r}")
    L, T = lipschitz, horizon
    try:
        inner = (2.0 * T * math.exp(L * T) / epsilon) * (
            L + 2.0 * max_norm * lam / L * math.expm1(2.0 * L * T))
        return inner ** 3
    except OverflowError:
        return math.inf


def variance_bound(N: int, lam: float, lipschitz: float, t: float) -> float:
    """Upper bound ``(2 lam / N) t exp(2 L t)`` on the total variance at time t."""
    _positive(N=N, lam=lam)
    if not (math.isfinite(lipschitz) and lipschitz >= 0):
        raise InvalidParameter(f"lipschitz must be >= 0, got {lipschitz!r}")
    if not (math.isfinite(t) and t >= 0):
        raise InvalidParameter(f"t must be >= 0, got {t!r}")
    try:
        return (2.0 * lam / N) * t * math.exp(2.0 * lipschitz * t)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class BoundParams:
    N: int
    epsilon: float
    horizon: float
    lam: float
    lipschitz: float
    max_norm: float = 0.0

    def __post_init__(self):
        _positive(N=self.N, epsilon=self.epsilon, horizon=self.horizon, lam=self.lam,
                  lipschitz=self.lipschitz)
        if not (math.isfinite(self.max_norm) and self.max_norm >= 0):
            raise InvalidParameter(f"max_norm must be >= 0, got {self.max_norm!r}")


@dataclass(frozen=True)
class DeviationBoundReport:
    params: BoundParams
    ell_star: int
    h_n_value: float
    n_threshold: float
    term_variance: float
    term_tail: float
    total: float
    meaningful: bool
    heuristic: bool = False
    lipschitz_floored: bool = False

    def as_dict(self) -> dict:
        d = asdict(self.params)
        d.update({k: v for k, v in asdict(self).items() if k != "params"})
        return d

    def lines(self) -> list[str]:
        return [f"{k}={_fmt(v)}" for k, v in self.as_dict().items()]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def deviation_bound(params: BoundParams, *, heuristic: bool = False,
                    lipschitz_floored: bool = False) -> DeviationBoundReport:
    """Evaluate every term of the finite-N deviation bound.

    ``heuristic`` and ``lipschitz_floored`` are labels passed through to the
    report, describing how the caller obtained ``params.lipschitz``.
    """
    p = params
    L, T = p.lipschitz, p.horizon
    ell = ell_star(T, p.lam, p.epsilon)
    tau = T / ell
    beta = p.epsilon / (math.e * p.lam)
    if 2.0 * tau > beta * (1 + 1e-12):
        raise AssertionError(f"cell length {tau} violates 2 tau <= eps / (e lam) = {beta}")
    h = tail_h(p.N, p.epsilon, p.lam, tau)
    growth = math.expm1(2.0 * L * T) if 2.0 * L * T < 709 else math.inf
    term_var = 9.0 * p.lam * ell / (4.0 * p.N * p.epsilon ** 2 * L) * growth
    term_tail = ell * h
    total = term_var + term_tail
    b = n_threshold_b(T, p.epsilon, p.lam, L, p.max_norm)
    return DeviationBoundReport(
        params=p, ell_star=ell, h_n_value=h, n_threshold=b, term_variance=term_var,
        term_tail=term_tail, total=total, meaningful=bool(total <= 1.0 and p.N > b),
        heuristic=heuristic, lipschitz_floored=lipschitz_floored)


def floored_lipschitz(lipschitz: float) -> tuple[float, bool]:
    """Raise a degenerate (zero) field constant to LIPSCHITZ_FLOOR; report whether it was."""
    if lipschitz < LIPSCHITZ_FLOOR:
        return LIPSCHITZ_FLOOR, True
    return float(lipschitz), False
