import numpy as np
import pytest
from scipy.stats import multivariate_normal

from flashsim.signal import (
    KalmanSmoother, _filter_smooth, expand_to_steps, fit_local_level, kalman_smooth, subsample,
    synthetic_fundamental,
)


def _local_level(n, q, r, seed):
    rng = np.random.default_rng(seed)
    x = 100 + np.cumsum(rng.normal(0, np.sqrt(q), n))
    return x, x + rng.normal(0, np.sqrt(r), n)


@pytest.mark.parametrize("q,r", [(0.1, 1.0), (1.0, 0.05), (0.3, 0.3)])
def test_smoother_matches_dense_gaussian_posterior(q, r):
    # joint Gaussian: x_t = m0 + e0 + sum of t state shocks, y = x + noise
    _, y = _local_level(60, q, r, 1)
    m0, p0 = y[0], 2.0
    t = np.arange(60)
    sx = p0 + q * np.minimum.outer(t, t)
    sy = sx + r * np.eye(60)
    post = m0 + sx @ np.linalg.solve(sy, y - m0)
    post_var = np.diag(sx - sx @ np.linalg.solve(sy, sx))
    xs, ps, _, ll = _filter_smooth(y, q, r, m0, p0)
    np.testing.assert_allclose(xs, post, rtol=0, atol=1e-8)
    np.testing.assert_allclose(ps, post_var, rtol=1e-7, atol=1e-10)
    assert ll == pytest.approx(multivariate_normal(np.full(60, m0), sy).logpdf(y), rel=1e-9)


def test_em_loglik_monotone_and_recovers_variances():
    _, y = _local_level(5000, 0.2, 1.0, 3)
    res = fit_local_level(y, max_iter=300, tol=1e-10)
    ll = np.asarray(res["loglik"])
    assert np.all(np.diff(ll) >= -1e-6 * np.abs(ll[:-1]))
    assert res["q"] == pytest.approx(0.2, rel=0.3)
    assert res["r"] == pytest.approx(1.0, rel=0.15)


def test_smoothed_closer_to_state_than_observations():
    x, y = _local_level(3000, 0.05, 1.0, 4)
    s = kalman_smooth(y)
    assert np.mean((s - x) ** 2) < 0.5 * np.mean((y - x) ** 2)


def test_constant_series_passes_through():
    y = np.full(500, 1160.0)
    np.testing.assert_array_equal(kalman_smooth(y), y)


def test_estimator_api():
    _, y = _local_level(2000, 0.2, 1.0, 5)
    ks = KalmanSmoother(max_iter=20)
    assert ks.get_params() == {"max_iter": 20, "tol": 1e-6}
    out = ks.fit_transform(y)
    assert out.shape == y.shape and ks.n_iter_ <= 21
    np.testing.assert_allclose(out, ks.transform(y))
    with pytest.raises(ValueError):
        ks.set_params(bogus=1)
    with pytest.raises(Exception):
        KalmanSmoother().transform(y)
    with pytest.raises(ValueError):
        KalmanSmoother().fit(y[:10])


def test_step_expansion_round_trip():
    s = synthetic_fundamental(100, 1160.0, drift=-0.01, volatility=0.02, seed=2)
    assert s[0] == 1160.0
    e = expand_to_steps(s, 10)
    assert len(e) == 1000
    np.testing.assert_array_equal(subsample(e, 10), s)


def test_synthetic_drift_reaches_target():
    s = synthetic_fundamental(1000, 1000.0, drift=-0.05, drift_seconds=500, volatility=0.0)
    assert s[500] == pytest.approx(950.0)
    assert s[-1] == pytest.approx(950.0)
