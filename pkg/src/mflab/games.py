"""Memoryless payoff mechanisms F: simplex -> R^n.

Two families are supported. A *matrix* game pays ``A @ x``. A *congestion*
game routes the population over parallel links with affine cost
``a_i * load_i + b_i``; payoffs are negated costs so that larger is better
for every revision protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import as_coords
from .errors import DimensionMismatch, InvalidParameter


@dataclass(frozen=True, eq=False)
class GameSpec:
    variant: str
    matrix: Optional[np.ndarray] = None
    slopes: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.variant == "matrix":
            A = np.array(self.matrix, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1] or A.size == 0:
                raise DimensionMismatch(f"payoff matrix must be square, got shape {A.shape}")
            if not np.all(np.isfinite(A)):
                raise InvalidParameter("payoff matrix has non-finite entries")
            A.setflags(write=False)
            object.__setattr__(self, "matrix", A)
        elif self.variant == "congestion":
            a = np.array(self.slopes, dtype=float).ravel()
            b = np.array(self.offsets, dtype=float).ravel()
            if a.size == 0 or a.shape != b.shape:
                raise DimensionMismatch("congestion slopes and offsets must be equal-length vectors")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise InvalidParameter("congestion coefficients must be finite")
            if np.any(a < 0):
                raise InvalidParameter("congestion slopes must be non-negative")
            a.setflags(write=False)
            b.setflags(write=False)
            object.__setattr__(self, "slopes", a)
            object.__setattr__(self, "offsets", b)
        else:
            raise InvalidParameter(f"unknown game variant {self.variant!r}")

    @property
    def n(self) -> int:
        if self.variant == "matrix":
            return self.matrix.shape[0]
        return self.slopes.size

    def to_dict(self) -> dict:
        if self.variant == "matrix":
            return {"type": "matrix", "matrix": self.matrix.tolist()}
        return {"type": "congestion", "slopes": self.slopes.tolist(),
                "offsets": self.offsets.tolist()}


def matrix_game(A, name: str = "") -> GameSpec:
    return GameSpec("matrix", matrix=A, name=name)


def congestion_game(slopes, offsets, name: str = "") -> GameSpec:
    return GameSpec("congestion", slopes=slopes, offsets=offsets, name=name)


def payoff_batch(game: GameSpec, X: np.ndarray) -> np.ndarray:
    """Payoffs for a stack of states ``X`` of shape (..., n).

    Uses einsum rather than matmul so results do not depend on BLAS
    threading.
    """
    if X.shape[-1] != game.n:
        raise DimensionMismatch(f"state has {X.shape[-1]} strategies, game has {game.n}")
    if game.variant == "matrix":
        return np.einsum("ij,...j->...i", game.matrix, X)
    return -(game.slopes * X + game.offsets)


def payoff(game: GameSpec, x) -> np.ndarray:
    """Payoff vector F(x) at a single population state."""
    p = payoff_batch(game, as_coords(x))
    if not np.all(np.isfinite(p)):
        raise InvalidParameter("payoff evaluation produced non-finite values")
    return p


def payoff_lipschitz(game: GameSpec) -> float:
    """l2 Lipschitz constant of the payoff map.

    Spectral norm of the matrix for matrix games; the largest slope for
    congestion games (the Jacobian there is diagonal).
    """
    if game.variant == "matrix":
        return float(np.linalg.norm(game.matrix, 2))
    return float(np.max(game.slopes))


RPS = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])

BUILTIN_GAMES = {
    "rps": (lambda: matrix_game(RPS, name="rps"),
            "standard rock-paper-scissors, zero-sum, 3 strategies"),
    "coordination2": (lambda: matrix_game([[1.0, 0.0], [0.0, 2.0]], name="coordination2"),
                      "two-strategy pure coordination game"),
    "hawk_dove": (lambda: matrix_game([[-1.0, 2.0], [0.0, 1.0]], name="hawk_dove"),
                  "hawk-dove with V=2, C=4 (scaled)"),
    "congestion2": (lambda: congestion_game([1.0, 1.0], [0.0, 0.0], name="congestion2"),
                    "two parallel links with cost = load"),
    "congestion3": (lambda: congestion_game([1.0, 2.0, 0.5], [0.0, 0.1, 0.3], name="congestion3"),
                    "three affine-cost links"),
    "zero3": (lambda: matrix_game(np.zeros((3, 3)), name="zero3"),
              "constant zero payoffs, 3 strategies"),
}


def builtin_game(name: str) -> GameSpec:
    try:
        return BUILTIN_GAMES[name][0]()
    except KeyError:
        raise InvalidParameter(
            f"unknown built-in game {name!r}; choose from {sorted(BUILTIN_GAMES)}") from None
