import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flashsim.facts import (
    DegenerateSeriesError, StylisedFactsDistance, acf, block_bootstrap, bootstrap_weights,
    differentials, distance, hill_estimator, moment_vector, per_second_prices, resample_returns,
)


def _garch_like(n, seed):
    rng = np.random.default_rng(seed)
    vol = np.exp(np.convolve(rng.normal(0, 0.3, n), np.ones(50) / 7, "same"))
    return 1e-4 * vol * rng.standard_t(4, n)


def test_hill_pareto_three():
    rng = np.random.default_rng(0)
    x = rng.pareto(3.0, 200_000) + 1.0
    assert abs(hill_estimator(x) - 1 / 3) < 0.03


def test_hill_exact_on_constructed_tail():
    # top k log-spacings equal to 1 give an estimate of exactly 1
    tail = np.exp(np.arange(1, 21, dtype=float))
    x = np.concatenate([np.full(380, 0.5), [1.0], tail])
    assert hill_estimator(x, tail_fraction=20 / len(x) + 1e-9) == pytest.approx(10.5)


def test_hill_needs_tail():
    with pytest.raises(DegenerateSeriesError):
        hill_estimator(np.ones(50))


def test_acf_alternating_and_trend():
    x = np.tile([1.0, -1.0], 5000)
    assert acf(x, 1) == pytest.approx(-1.0, abs=0.01)
    assert acf(x, 2) == pytest.approx(1.0, abs=0.01)
    with pytest.raises(DegenerateSeriesError):
        acf(np.ones(10), 1)
    with pytest.raises(ValueError):
        acf(x, len(x))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=10, max_size=60).filter(lambda v: np.ptp(v) > 1e-3),
       st.integers(1, 4))
def test_acf_matches_numpy_correlate(v, lag):
    x = np.asarray(v)
    d = x - x.mean()
    ref = np.correlate(d, d, "full")[len(x) - 1 + lag] / np.dot(d, d)
    if lag < len(x) / 2:
        assert acf(x, lag) == pytest.approx(ref, abs=1e-12)
        assert -1 - 1e-12 <= acf(x, lag) <= 1 + 1e-12


def test_per_second_prices_last_valid_and_fill():
    mid = np.array([1, 2, np.nan, 4, np.nan, np.nan, np.nan, np.nan, 9, np.nan], float)
    np.testing.assert_array_equal(per_second_prices(mid, 0, 2), [2, 4, 4, 4, 9])
    np.testing.assert_array_equal(per_second_prices(mid, 3, 2), [4, 4, 9])
    r = resample_returns(mid, 0, 2)
    np.testing.assert_allclose(r, [1.0, 0.0, 0.0, 1.25])


def test_distance_zero_on_itself_and_positive_otherwise():
    r = _garch_like(20_000, 1)
    w = bootstrap_weights(r, block_size=1800, n_boot=30, seed=0)
    assert distance(r, r, w) == 0.0
    assert distance(_garch_like(20_000, 2) * 2, r, w) > 0


def test_bootstrap_weights_structure():
    r = _garch_like(20_000, 3)
    w = bootstrap_weights(r, block_size=1800, n_boot=30, seed=0)
    np.testing.assert_allclose(w.weights * w.sigma2, 1.0)
    assert len(w.boot_distances) == 30 and w.d_critical > 0
    assert set(w.moment_sd) >= {"inv_hill", "vol", "acf_r2_1"}
    again = bootstrap_weights(r, block_size=1800, n_boot=30, seed=0)
    np.testing.assert_array_equal(w.weights, again.weights)


def test_block_bootstrap_keeps_blocks():
    x = np.arange(1000.0)
    y = block_bootstrap(x, 100, np.random.default_rng(0))
    steps = np.diff(y)
    # breaks only at block joins or the circular wrap
    assert np.sum(steps != 1) <= 10 + 10
    assert len(y) == 1000


def test_differentials_symmetric_zero_on_equal():
    a = moment_vector(_garch_like(5000, 4))
    b = moment_vector(_garch_like(5000, 5))
    np.testing.assert_array_equal(differentials(a, a), 0)
    np.testing.assert_allclose(differentials(a, b), differentials(b, a))


def test_estimator_api():
    r = _garch_like(10_000, 6)
    est = StylisedFactsDistance(n_boot=20).fit(r)
    assert est.distance(r) == 0.0 and est.score(r) == 0.0
    other = _garch_like(10_000, 7)
    assert est.distance(other) == pytest.approx(distance(other, r, est.weights_))
    assert est.transform([r, other]).shape == (2, 4)
    with pytest.raises(ValueError):
        est.set_params(nope=1)
