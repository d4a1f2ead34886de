"""Revision protocols and the switching distribution of a revising agent.

A protocol maps a population state ``x`` and payoff vector ``p`` to a
non-negative rate matrix ``T`` with ``T[i, j]`` the rate at which revising
i-strategists move to j. Dividing by the clock rate ``lam`` gives switch
probabilities; whatever is left over is the probability of staying put.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_coords
from .errors import BoundViolation, DimensionMismatch, InvalidParameter

PROTOCOLS = {
    "smith": "pairwise comparison: T_ij = [p_j - p_i]+",
    "bnn": "Brown-von Neumann-Nash excess payoff: T_ij = [p_j - x.p]+",
    "logit": "logit choice: T_ij = lam * softmax(p / eta)_j",
    "imitation": "pairwise proportional imitation: T_ij = x_j [p_j - p_i]+",
    "fixed_rate": "payoff-blind switching: T_ij = c for j != i",
    "null": "no switching: T = 0",
}

# Relative slack on the row-sum check; absorbs rounding in exactly-tight cases.
ROW_SUM_RTOL = 1e-12


@dataclass(frozen=True)
class ProtocolSpec:
    variant: str
    lam: float
    eta: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.variant not in PROTOCOLS:
            raise InvalidParameter(f"unknown protocol {self.variant!r}; choose from {sorted(PROTOCOLS)}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParameter(f"clock rate lambda must be positive, got {self.lam}")
        if self.variant == "logit" and not (self.eta is not None and self.eta > 0):
            raise InvalidParameter("logit protocol needs a positive temperature eta")
        if self.variant == "fixed_rate" and not (self.c is not None and self.c > 0):
            raise InvalidParameter("fixed_rate protocol needs a positive rate c")

    def to_dict(self) -> dict:
        d = {"name": self.variant, "lambda": self.lam}
        if self.eta is not None:
            d["eta"] = self.eta
        if self.c is not None:
            d["c"] = self.c
        return d


def rates_batch(protocol: ProtocolSpec, X: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Unchecked rate matrices for stacks of states/payoffs of shape (..., n)."""
    n = X.shape[-1]
    v = protocol.variant
    if v == "smith":
        T = np.maximum(P[..., None, :] - P[..., :, None], 0.0)
    elif v == "imitation":
        T = X[..., None, :] * np.maximum(P[..., None, :] - P[..., :, None], 0.0)
    elif v == "bnn":
        excess = np.maximum(P - np.sum(X * P, axis=-1, keepdims=True), 0.0)
        T = np.broadcast_to(excess[..., None, :], X.shape[:-1] + (n, n)).copy()
    elif v == "logit":
        z = P / protocol.eta
        z = z - z.max(axis=-1, keepdims=True)
        w = np.exp(z)
        s = protocol.lam * w / w.sum(axis=-1, keepdims=True)
        T = np.broadcast_to(s[..., None, :], X.shape[:-1] + (n, n)).copy()
    elif v == "fixed_rate":
        T = np.full(X.shape[:-1] + (n, n), float(protocol.c))
    else:
        T = np.zeros(X.shape[:-1] + (n, n))
    idx = np.arange(n)
    T[..., idx, idx] = 0.0
    return T


def check_row_sums(protocol: ProtocolSpec, T: np.ndarray, X=None, P=None) -> None:
    """Raise BoundViolation if any off-diagonal row sum exceeds the clock rate."""
    rows = T.sum(axis=-1)
    limit = protocol.lam * (1.0 + ROW_SUM_RTOL)
    bad = rows > limit
    if np.any(bad):
        where = np.argwhere(bad)[0]
        lead = tuple(where[:-1])
        row = int(where[-1])
        state = None if X is None else np.asarray(X)[lead].copy()
        pay = None if P is None else np.asarray(P)[lead].copy()
        total = float(rows[tuple(where)])
        raise BoundViolation(
            f"{protocol.variant}: row {row + 1} of the rate matrix sums to {total:.6g} > "
            f"lambda={protocol.lam:g} at state {state} with payoffs {pay}",
            state=state, payoff=pay, row=row, row_sum=total)


def switch_rates(protocol: ProtocolSpec, x, p) -> np.ndarray:
    """Rate matrix T(x, p) with zero diagonal, validated against the clock rate."""
    x = as_coords(x)
    p = np.asarray(p, dtype=float)
    if x.shape != p.shape or x.ndim != 1:
        raise DimensionMismatch(f"state shape {x.shape} and payoff shape {p.shape} differ")
    T = rates_batch(protocol, x, p)
    check_row_sums(protocol, T, x, p)
    return T


def distribution_from_rates(T_row: np.ndarray, lam: float, i: int) -> np.ndarray:
    probs = T_row / lam
    probs[..., i] = 0.0
    probs[..., i] = np.maximum(1.0 - probs.sum(axis=-1), 0.0)
    return probs


def switch_distribution(protocol: ProtocolSpec, x, p, i: int) -> np.ndarray:
    """Distribution of the new strategy of a revising i-strategist (0-based ``i``).

    Entry j != i is ``T[i, j] / lam``; entry i is the remaining mass.
    """
    T = switch_rates(protocol, x, p)
    if not 0 <= i < T.shape[0]:
        raise DimensionMismatch(f"strategy index {i} out of range for n={T.shape[0]}")
    return distribution_from_rates(T[i].copy(), protocol.lam, i)
