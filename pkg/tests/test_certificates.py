import math

import mpmath as mp
import pytest

from mflab.certificates import (BoundParams, deviation_bound, ell_star, exact_ceil,
                                floored_lipschitz, log_tail_h, n_threshold_b, tail_h,
                                variance_bound)
from mflab.errors import InvalidParameter

mp.mp.dps = 40


def oracle_total(N, eps, T, lam, L):
    eps = mp.mpf(str(eps))
    ell = 2 * mp.ceil(mp.mpf(T) * mp.e * lam / eps)
    tau = mp.mpf(T) / ell
    h = mp.exp(-lam * N * tau + 1) / mp.mpf(2) ** (mp.ceil(N * eps) - 1)
    var = 9 * lam * ell / (4 * N * eps ** 2 * L) * (mp.exp(2 * L * T) - 1)
    return var + ell * h


def test_ell_star():
    assert ell_star(1, 1, 1) == 6
    assert ell_star(1, 1, 0.3) == 2 * math.ceil(math.e / 0.3) == 20
    assert ell_star(1, 4, 0.1) == 2 * 109


def test_tail_h_example():
    assert tail_h(100, 0.1, 1, 0.01) == pytest.approx(1 / 512, rel=1e-12)


def test_tail_h_log_space_matches_naive():
    for N, eps, lam, tau in [(100, 0.1, 1, 0.01), (37, 0.25, 3, 0.02), (500, 0.05, 0.5, 0.1)]:
        naive = mp.exp(-lam * N * mp.mpf(tau) + 1) / mp.mpf(2) ** (math.ceil(N * eps) - 1)
        assert tail_h(N, eps, lam, tau) == pytest.approx(float(naive), rel=1e-12)


def test_tail_h_underflows_to_zero_without_error():
    assert tail_h(10 ** 6, 0.3, 1, 1 / 20) == 0.0
    assert log_tail_h(10 ** 6, 0.3, 1, 1 / 20) < -700


def test_variance_bound():
    assert variance_bound(1000, 1, 2, 1) == pytest.approx(float(2 / mp.mpf(1000) * mp.exp(4)),
                                                          rel=1e-12)
    assert variance_bound(1000, 1, 2, 1) == pytest.approx(0.109196, rel=5e-6)
    assert variance_bound(1000, 1, 2, 0) == 0.0
    assert variance_bound(2000, 1, 2, 1) == pytest.approx(variance_bound(1000, 1, 2, 1) / 2)
    assert math.isinf(variance_bound(10, 1, 1e6, 1))


def test_deviation_bound_example():
    r = deviation_bound(BoundParams(10 ** 6, 0.3, 1, 1, 2))
    assert r.ell_star == 20
    assert r.h_n_value == 0.0
    assert r.total == pytest.approx(float(oracle_total(10 ** 6, 0.3, 1, 1, 2)), rel=1e-12)
    assert r.total == pytest.approx(0.01340, rel=5e-4)
    assert r.term_tail == 0.0
    assert r.meaningful
    assert not deviation_bound(BoundParams(10 ** 6, 0.3, 1, 1, 2, max_norm=1.0)).meaningful


@pytest.mark.parametrize("args", [(1000, 0.1, 1, 4, 6.5), (50, 0.2, 0.5, 2, 1.0),
                                  (10 ** 4, 0.05, 2, 1, 0.3)])
def test_deviation_bound_matches_high_precision(args):
    r = deviation_bound(BoundParams(*args))
    assert r.total == pytest.approx(float(oracle_total(*args)), rel=1e-12)


def test_n_threshold_example():
    b = n_threshold_b(1, 0.3, 1, 2, 1)
    L, T, eps, lam, phi = 2, 1, mp.mpf("0.3"), 1, 1
    oracle = (2 * T * mp.exp(L * T) / eps * (L + 2 * phi * lam / L * (mp.exp(2 * L * T) - 1))) ** 3
    assert b == pytest.approx(float(oracle), rel=1e-12)
    assert b == pytest.approx(2.0543e10, rel=5e-5)


def test_n_threshold_overflow_is_inf():
    assert math.isinf(n_threshold_b(100, 0.1, 1, 50, 1))


def test_total_decreases_in_N_and_epsilon():
    totals = [deviation_bound(BoundParams(N, 0.2, 1, 4, 6.5)).total for N in (10, 100, 10 ** 3, 10 ** 4)]
    assert all(a > b for a, b in zip(totals, totals[1:]))
    by_eps = [deviation_bound(BoundParams(1000, e, 1, 4, 6.5)).total for e in (0.05, 0.1, 0.2, 0.4)]
    assert all(a > b for a, b in zip(by_eps, by_eps[1:]))


def test_doubling_epsilon_cuts_variance_term_by_at_least_four():
    a = deviation_bound(BoundParams(1000, 0.01, 1, 1, 1)).term_variance
    b = deviation_bound(BoundParams(1000, 0.02, 1, 1, 1)).term_variance
    assert a / b >= 4


def test_report_lines():
    r = deviation_bound(BoundParams(10 ** 6, 0.3, 1, 1, 2), heuristic=True)
    lines = dict(line.split("=", 1) for line in r.lines())
    assert lines["heuristic"] == "true"
    assert lines["meaningful"] == "true"
    assert lines["lipschitz_floored"] == "false"
    assert float(lines["total"]) == r.total
    assert lines["ell_star"] == "20"


def test_exact_ceil():
    assert exact_ceil(1000 * 0.3) == 300
    assert exact_ceil(2.5) == 3
    assert exact_ceil(3.0) == 3


@pytest.mark.parametrize("kw", [dict(N=0), dict(epsilon=-0.1), dict(horizon=0.0),
                                dict(lam=float("nan")), dict(lipschitz=0.0),
                                dict(max_norm=-1.0)])
def test_invalid_params(kw):
    base = dict(N=100, epsilon=0.1, horizon=1.0, lam=1.0, lipschitz=1.0, max_norm=0.0)
    base.update(kw)
    with pytest.raises(InvalidParameter):
        BoundParams(**base)


def test_invalid_scalar_inputs():
    with pytest.raises(InvalidParameter):
        ell_star(1, 1, 0)
    with pytest.raises(InvalidParameter):
        variance_bound(100, 1, 1, -1)
    with pytest.raises(InvalidParameter):
        tail_h(100, 0.1, 1, 0)


def test_floored_lipschitz():
    assert floored_lipschitz(0.0) == (1e-6, True)
    assert floored_lipschitz(2.5) == (2.5, False)
