import numpy as np
import pytest

from conftest import random_simplex
from mflab.errors import DimensionMismatch, InvalidParameter
from mflab.games import (BUILTIN_GAMES, RPS, builtin_game, congestion_game, matrix_game, payoff,
                         payoff_lipschitz)


def test_rps_payoffs(rps):
    np.testing.assert_array_equal(payoff(rps, [1 / 3, 1 / 3, 1 / 3]), [0, 0, 0])
    np.testing.assert_array_equal(payoff(rps, [1, 0, 0]), [0, 1, -1])


def test_congestion_payoffs_are_negated_costs():
    g = congestion_game([1, 1], [0, 0])
    np.testing.assert_allclose(payoff(g, [0.7, 0.3]), [-0.7, -0.3])


def test_dimension_mismatch(rps):
    with pytest.raises(DimensionMismatch):
        payoff(rps, [0.5, 0.5])


def test_invalid_games():
    with pytest.raises(InvalidParameter):
        congestion_game([-1, 1], [0, 0])
    with pytest.raises(InvalidParameter):
        matrix_game([[np.inf, 0], [0, 0]])
    with pytest.raises(DimensionMismatch):
        matrix_game([[1, 2, 3]])


def test_lipschitz_constants(rps):
    assert payoff_lipschitz(matrix_game(np.zeros((3, 3)))) == 0.0
    # oracle: square root of the largest eigenvalue of A^T A
    assert np.sqrt(np.linalg.eigvalsh(RPS.T @ RPS).max()) == pytest.approx(np.sqrt(3), rel=1e-12)
    assert payoff_lipschitz(rps) == pytest.approx(1.7320508, abs=1e-7)
    assert payoff_lipschitz(congestion_game([1, 2], [5, -3])) == 2.0


@pytest.mark.parametrize("name", sorted(BUILTIN_GAMES))
def test_payoff_is_lipschitz_with_reported_constant(name):
    g = builtin_game(name)
    rng = np.random.default_rng(1)
    X = random_simplex(rng, 1000, g.n)
    Y = random_simplex(rng, 1000, g.n)
    L = payoff_lipschitz(g)
    for x, y in zip(X, Y):
        assert np.linalg.norm(payoff(g, x) - payoff(g, y)) <= L * np.linalg.norm(x - y) + 1e-12


def test_matrix_payoff_is_linear(rps):
    rng = np.random.default_rng(2)
    for x, y, a in zip(random_simplex(rng, 50, 3), random_simplex(rng, 50, 3), rng.random(50)):
        np.testing.assert_allclose(payoff(rps, a * x + (1 - a) * y),
                                   a * payoff(rps, x) + (1 - a) * payoff(rps, y), atol=1e-14)
