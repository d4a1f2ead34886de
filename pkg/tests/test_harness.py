import csv

import numpy as np
import pytest
from scipy import stats

from mflab.certificates import BoundParams, deviation_bound
from mflab.core import DiscretePopulationState, GridTrajectory, JumpTrajectory
from mflab.engine import ModelSpec, derive_seed, simulate
from mflab.errors import HorizonMismatch, InvalidParameter, OutOfRange, TooFewReplicas
from mflab.games import builtin_game
from mflab.harness import (clopper_pearson, empirical_variance, exceedance_report, run_replicas,
                           sup_deviation, write_exceedance_csv, write_replicas_csv,
                           write_variance_csv)
from mflab.meanfield import solve_mean_ode
from mflab.protocols import ProtocolSpec


def const_grid(x, horizon=1.0, step=0.1):
    K = int(round(horizon / step))
    return GridTrajectory(np.arange(K + 1) * step, np.tile(np.asarray(x, float), (K + 1, 1)), step)


def still_path(counts, horizon=1.0):
    return JumpTrajectory(DiscretePopulationState(np.asarray(counts)), np.empty(0),
                          np.empty((0, len(counts)), dtype=np.int64), horizon)


def test_sup_deviation_identical_constant_paths():
    raw, cons = sup_deviation(still_path([5, 5]), const_grid([0.5, 0.5]), max_norm=2.0)
    assert raw == 0.0
    assert cons == pytest.approx(0.2)


def test_sup_deviation_opposite_vertices():
    raw, _ = sup_deviation(still_path([1, 0]), const_grid([0.0, 1.0]), max_norm=0.0)
    assert raw == pytest.approx(np.sqrt(2))


def test_sup_deviation_sees_both_sides_of_a_jump():
    # path sits at the ODE point, then jumps away mid-step
    path = JumpTrajectory(DiscretePopulationState(np.array([2, 0])), np.array([0.55]),
                          np.array([[1, 1]]), 1.0)
    raw, _ = sup_deviation(path, const_grid([1.0, 0.0]), 0.0)
    assert raw == pytest.approx(np.hypot(0.5, 0.5))


def test_sup_deviation_horizon_mismatch():
    with pytest.raises(HorizonMismatch):
        sup_deviation(still_path([5, 5], 1.0), const_grid([0.5, 0.5], 2.0), 1.0)


def test_sup_deviation_refines_with_step(rps_smith):
    tr = simulate(rps_smith, 200, [100, 60, 40], 1.0, seed=4)
    coarse = sup_deviation(tr, solve_mean_ode(rps_smith, [0.5, 0.3, 0.2], 1.0, 0.1), 1.5)
    fine = sup_deviation(tr, solve_mean_ode(rps_smith, [0.5, 0.3, 0.2], 1.0, 0.001), 1.5)
    assert fine[1] - fine[0] < coarse[1] - coarse[0]
    assert abs(fine[0] - coarse[0]) <= 1.5 * 0.1 + 1e-3


def test_single_replica_matches_simulate(rps_smith):
    ens = run_replicas(rps_smith, 90, [30, 30, 30], 1.0, 1, 77, 0.01, max_norm=1.5)
    seed = derive_seed(77, 0)
    assert int(ens.seeds[0]) == seed
    tr = simulate(rps_smith, 90, [30, 30, 30], 1.0, seed)
    raw, cons = sup_deviation(tr, ens.ode, 1.5)
    assert ens.jumps[0] == tr.jump_count
    assert ens.sup_raw[0] == raw and ens.sup_conservative[0] == cons


def test_worker_count_does_not_change_results(rps_smith):
    kw = dict(report_times=[0.0, 0.5], max_norm=1.5)
    a = run_replicas(rps_smith, 60, [20, 20, 20], 0.5, 300, 5, 0.01, workers=1, **kw)
    b = run_replicas(rps_smith, 60, [20, 20, 20], 0.5, 300, 5, 0.01, workers=2, **kw)
    assert a.results_digest == b.results_digest
    assert a.M == 300 and len(set(a.seeds.tolist())) == 300


def test_null_ensemble_never_deviates():
    m = ModelSpec(builtin_game("rps"), ProtocolSpec("null", 2.0))
    ens = run_replicas(m, 30, [10, 10, 10], 1.0, 20, 1, 0.1, report_times=[0.0, 1.0])
    assert np.all(ens.sup_raw <= 1e-15)
    curve = empirical_variance(ens, [0.0, 1.0])
    assert np.all(curve.variance == 0)


def test_variance_at_time_zero_is_exactly_zero(rps_smith):
    ens = run_replicas(rps_smith, 60, [30, 20, 10], 0.5, 50, 5, 0.01, report_times=[0.0, 0.5],
                       max_norm=1.5)
    curve = empirical_variance(ens, [0.0, 0.5])
    assert curve.variance[0] == 0.0 and curve.variance[1] > 0


def test_variance_matches_numpy(rps_smith):
    ens = run_replicas(rps_smith, 60, [30, 20, 10], 1.0, 200, 8, 0.01, report_times=[1.0],
                       max_norm=1.5)
    X = ens.samples[:, 0, :] / 60
    assert empirical_variance(ens, [1.0]).variance[0] == pytest.approx(X.var(axis=0, ddof=1).sum(),
                                                                       rel=1e-12)


def test_variance_errors(rps_smith):
    one = run_replicas(rps_smith, 30, [10, 10, 10], 0.5, 1, 5, 0.1, report_times=[0.5],
                       max_norm=1.5)
    with pytest.raises(TooFewReplicas):
        empirical_variance(one, [0.5])
    two = run_replicas(rps_smith, 30, [10, 10, 10], 0.5, 2, 5, 0.1, report_times=[0.5],
                       max_norm=1.5)
    with pytest.raises(OutOfRange):
        empirical_variance(two, [0.25])


def test_run_replicas_validates(rps_smith):
    with pytest.raises(InvalidParameter):
        run_replicas(rps_smith, 30, [10, 10, 10], 1.0, 0, 1, 0.1)
    with pytest.raises(InvalidParameter):
        run_replicas(rps_smith, 31, [10, 10, 10], 1.0, 5, 1, 0.1)


def _cp_oracle(k, M, conf=0.95):
    # invert the binomial tails by bisection
    a = (1 - conf) / 2

    def solve(f):
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = (lo + hi) / 2
            if f(mid):
                hi = mid
            else:
                lo = mid
        return (lo + hi) / 2

    lower = 0.0 if k == 0 else solve(lambda p: stats.binom.sf(k - 1, M, p) >= a)
    upper = 1.0 if k == M else solve(lambda p: stats.binom.cdf(k, M, p) <= a)
    return lower, upper


@pytest.mark.parametrize("k,M", [(3, 100), (0, 50), (50, 50), (17, 40), (1, 500)])
def test_clopper_pearson_against_oracle(k, M):
    lo, hi = clopper_pearson(k, M)
    olo, ohi = _cp_oracle(k, M)
    assert lo == pytest.approx(olo, abs=1e-9)
    assert hi == pytest.approx(ohi, abs=1e-9)


def test_clopper_pearson_known_value():
    lo, hi = clopper_pearson(3, 100)
    assert lo == pytest.approx(0.0062, abs=1e-4)
    assert hi == pytest.approx(0.0852, abs=1e-4)
    with pytest.raises(InvalidParameter):
        clopper_pearson(5, 4)


def test_verdicts(rps_smith):
    ens = run_replicas(rps_smith, 60, [20, 20, 20], 0.5, 40, 5, 0.01, max_norm=1.5)
    vac = exceedance_report(ens, 0.1, deviation_bound(BoundParams(60, 0.1, 0.5, 4, 6.5)))
    assert vac.bound.total > 1 and vac.verdict == "vacuous"
    small = deviation_bound(BoundParams(10 ** 6, 0.3, 1, 1, 2))
    ok = exceedance_report(ens, 10.0, small)
    assert ok.count == 0 and ok.ci_lo == 0.0 and ok.verdict == "consistent"
    bad = exceedance_report(ens, 1e-9, small)
    assert bad.count == 40 and bad.verdict == "violated"


def test_csv_outputs(tmp_path, rps_smith):
    ens = run_replicas(rps_smith, 60, [20, 20, 20], 0.5, 5, 5, 0.01, report_times=[0.0, 0.5],
                       max_norm=1.5)
    write_replicas_csv(tmp_path / "r.csv", ens)
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["replica_index", "seed", "jumps", "sup_raw", "sup_conservative"]
    assert len(rows) == 6 and int(rows[3][1]) == derive_seed(5, 2)

    write_variance_csv(tmp_path / "v.csv", empirical_variance(ens, [0.0, 0.5]), 60, 4.0, 6.5)
    rows = list(csv.reader(open(tmp_path / "v.csv")))
    assert rows[0] == ["time", "empirical_var", "stderr", "lemma1_bound"]
    assert rows[1][1] == "0.0" and rows[1][3] == "0.0"

    rep = exceedance_report(ens, 0.1, deviation_bound(BoundParams(60, 0.1, 0.5, 4, 6.5)))
    write_exceedance_csv(tmp_path / "e.csv", [rep])
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["epsilon", "count", "M", "freq", "ci_lo", "ci_hi", "bound_total", "verdict"]
    assert rows[1][-1] == "vacuous"


def test_variance_scales_like_one_over_N_away_from_rest(rps_smith):
    v = {}
    for N in (100, 1000):
        c = np.array([N // 2, 3 * N // 10, N // 5])
        ens = run_replicas(rps_smith, N, c, 1.0, 500, 3, 0.01, report_times=[0.5, 1.0],
                           max_norm=1.5)
        v[N] = empirical_variance(ens, [0.5, 1.0]).variance
    ratio = v[100] / v[1000]
    assert np.all((ratio > 7) & (ratio < 14))
