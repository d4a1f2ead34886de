import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mflab.errors import BoundViolation, InvalidParameter
from mflab.protocols import PROTOCOLS, ProtocolSpec, switch_distribution, switch_rates

P = np.array([0.0, 1.0, -1.0])
X = np.array([0.5, 0.3, 0.2])


def test_smith_rates_by_hand():
    T = switch_rates(ProtocolSpec("smith", 3.0), X, P)
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    expected[2, 0] = 1.0
    expected[2, 1] = 2.0
    np.testing.assert_array_equal(T, expected)


def test_null_rates():
    np.testing.assert_array_equal(switch_rates(ProtocolSpec("null", 1.0), X, P), np.zeros((3, 3)))


def test_bound_violation_records_state():
    with pytest.raises(BoundViolation) as info:
        switch_rates(ProtocolSpec("smith", 2.0), X, P)
    assert info.value.row == 2
    assert info.value.row_sum == 3.0
    np.testing.assert_array_equal(info.value.payoff, P)


def test_switch_distribution_smith():
    d = switch_distribution(ProtocolSpec("smith", 4.0), X, P, 2)
    np.testing.assert_allclose(d, [0.25, 0.5, 0.25])


def test_null_distribution_stays():
    for i in range(3):
        np.testing.assert_array_equal(switch_distribution(ProtocolSpec("null", 1.0), X, P, i),
                                      np.eye(3)[i])


def test_logit_flattens_at_high_temperature():
    d = switch_distribution(ProtocolSpec("logit", 1.0, eta=1e6), X, P, 0)
    np.testing.assert_allclose(d, [1 / 3] * 3, atol=1e-6)


def test_fixed_rate_and_bnn():
    T = switch_rates(ProtocolSpec("fixed_rate", 2.0, c=1.0), X, P)
    np.testing.assert_array_equal(T, np.ones((3, 3)) - np.eye(3))
    T = switch_rates(ProtocolSpec("bnn", 3.0), X, P)
    excess = np.maximum(P - X @ P, 0)  # x.p = 0.1
    np.testing.assert_allclose(T[0], [0.0, excess[1], excess[2]])


def test_spec_validation():
    with pytest.raises(InvalidParameter):
        ProtocolSpec("smith", 0.0)
    with pytest.raises(InvalidParameter):
        ProtocolSpec("logit", 1.0)
    with pytest.raises(InvalidParameter):
        ProtocolSpec("fixed_rate", 1.0, c=-1)
    with pytest.raises(InvalidParameter):
        ProtocolSpec("replicator", 1.0)


simplex3 = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).map(
    lambda v: (np.array(v) + 1e-9) / (np.sum(v) + 3e-9))
payoffs3 = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3).map(np.array)
protocol_specs = st.sampled_from([
    ProtocolSpec("smith", 4.0), ProtocolSpec("bnn", 4.0), ProtocolSpec("imitation", 2.0),
    ProtocolSpec("logit", 1.5, eta=0.3), ProtocolSpec("fixed_rate", 1.0, c=0.4),
    ProtocolSpec("null", 1.0)])


@settings(max_examples=200)
@given(protocol_specs, simplex3, payoffs3, st.integers(0, 2))
def test_distribution_is_a_probability_vector(proto, x, p, i):
    d = switch_distribution(proto, x, p, i)
    assert np.all(d >= 0)
    assert abs(d.sum() - 1.0) <= 1e-12


@given(simplex3, payoffs3)
def test_sign_preservation(x, p):
    Ts = switch_rates(ProtocolSpec("smith", 4.0), x, p)
    Ti = switch_rates(ProtocolSpec("imitation", 4.0), x, p)
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            assert (Ts[i, j] > 0) == (p[j] > p[i])
            assert (Ti[i, j] > 0) == (p[j] > p[i] and x[j] > 0)


def test_imitation_never_revives_extinct_strategy():
    x = np.array([0.6, 0.4, 0.0])
    T = switch_rates(ProtocolSpec("imitation", 4.0), x, np.array([0.0, -1.0, 5.0]))
    assert np.all(T[:, 2] == 0)


def test_every_protocol_documented():
    assert set(PROTOCOLS) == {"smith", "bnn", "logit", "imitation", "fixed_rate", "null"}
