"""Fundamental value extraction and per-second/per-step plumbing.

The fundamental value is treated as the hidden level of a local-level model
(random-walk state observed with white noise).  Its two variances are fit by
EM and the smoothed state mean is returned.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._validation import check_array, check_is_fitted

MIN_OBSERVATIONS = 100


@njit(cache=True)
def _filter_smooth(y, q, r, m0, p0):
    n = y.shape[0]
    a = np.empty(n)
    p = np.empty(n)
    ll = 0.0
    am = m0
    pm = p0
    for t in range(n):
        if t > 0:
            am = a[t - 1]
            pm = p[t - 1] + q
        s = pm + r
        e = y[t] - am
        k = pm / s
        a[t] = am + k * e
        p[t] = (1.0 - k) * pm
        ll -= 0.5 * (np.log(2.0 * np.pi * s) + e * e / s)
    xs = np.empty(n)
    ps = np.empty(n)
    jj = np.zeros(n)
    xs[n - 1] = a[n - 1]
    ps[n - 1] = p[n - 1]
    for t in range(n - 2, -1, -1):
        pp = p[t] + q
        j = p[t] / pp if pp > 0 else 0.0
        jj[t] = j
        xs[t] = a[t] + j * (xs[t + 1] - a[t])
        ps[t] = p[t] + j * j * (ps[t + 1] - pp)
    return xs, ps, jj, ll


@njit(cache=True)
def _m_step(y, xs, ps, jj):
    n = y.shape[0]
    r = 0.0
    for t in range(n):
        d = y[t] - xs[t]
        r += d * d + ps[t]
    q = 0.0
    for t in range(1, n):
        d = xs[t] - xs[t - 1]
        q += d * d + ps[t] + ps[t - 1] - 2.0 * jj[t - 1] * ps[t]
    return q / (n - 1), r / n


def fit_local_level(y, max_iter=50, tol=1e-6):
    """EM fit of (state variance, observation variance); returns a dict.

    The prior on the first state is fixed at ``N(y[0], var(diff(y)))`` so the
    likelihood is a proper function of the two variances and EM steps never
    decrease it.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    dv = float(np.var(np.diff(y)))
    floor = 1e-12 * max(1.0, float(np.mean(np.abs(y)))) ** 2
    if dv <= floor:
        return {"q": 0.0, "r": 0.0, "loglik": [], "smoothed": y.copy(), "n_iter": 0}
    r = dv
    q = 0.1 * dv
    m0, p0 = y[0], dv
    lls = []
    xs = y
    for it in range(max_iter):
        xs, ps, jj, ll = _filter_smooth(y, q, r, m0, p0)
        lls.append(float(ll))
        if it > 0 and abs(lls[-1] - lls[-2]) < tol * abs(lls[-2]):
            break
        q, r = _m_step(y, xs, ps, jj)
        q, r = max(q, floor), max(r, floor)
    else:
        xs, ps, jj, ll = _filter_smooth(y, q, r, m0, p0)
        lls.append(float(ll))
    return {"q": float(q), "r": float(r), "loglik": lls, "smoothed": np.asarray(xs), "n_iter": len(lls)}


def kalman_smooth(observed, max_iter=50, tol=1e-6):
    """Smoothed fundamental value for a per-second price series."""
    y = check_array(observed, name="observed prices", min_length=MIN_OBSERVATIONS)
    return fit_local_level(y, max_iter=max_iter, tol=tol)["smoothed"]


class KalmanSmoother:
    """Estimator wrapper around :func:`fit_local_level`.

    ``fit`` learns the two variances, ``transform`` smooths any series with
    the fitted variances (no refit).
    """

    def __init__(self, max_iter=50, tol=1e-6):
        self.max_iter = max_iter
        self.tol = tol

    def get_params(self, deep=True):
        return {"max_iter": self.max_iter, "tol": self.tol}

    def set_params(self, **params):
        for k, v in params.items():
            if k not in self.get_params():
                raise ValueError(f"invalid parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, X, y=None):
        obs = check_array(X, name="observed prices", min_length=MIN_OBSERVATIONS)
        res = fit_local_level(obs, self.max_iter, self.tol)
        self.state_var_ = res["q"]
        self.obs_var_ = res["r"]
        self.loglik_ = np.asarray(res["loglik"])
        self.n_iter_ = res["n_iter"]
        return self

    def transform(self, X):
        check_is_fitted(self, "obs_var_")
        obs = check_array(X, name="observed prices", min_length=2)
        if self.obs_var_ == 0.0:
            return obs.copy()
        dv = max(float(np.var(np.diff(obs))), self.obs_var_)
        return _filter_smooth(obs, self.state_var_, self.obs_var_, obs[0], dv)[0]

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


def expand_to_steps(series, steps_per_second=10):
    """Hold each per-second value for ``steps_per_second`` steps."""
    return np.repeat(np.asarray(series, dtype=np.float64), int(steps_per_second))


def subsample(series, steps_per_second=10):
    """Value at the first step of each second (inverse of :func:`expand_to_steps`)."""
    return np.asarray(series)[:: int(steps_per_second)]


def synthetic_fundamental(n_seconds, start_price=1160.0, drift=0.0, drift_seconds=None,
                          volatility=0.02, seed=0):
    """Per-second pseudo-historical fundamental path.

    A Gaussian random walk with ``volatility`` price units per second on top
    of a linear trend that moves the level by ``drift`` (a fraction of the
    start price) over the first ``drift_seconds`` and stays flat after.
    """
    if n_seconds < 1:
        raise ValueError("n_seconds must be >= 1")
    rng = np.random.default_rng(seed)
    ds = n_seconds if drift_seconds is None else max(int(drift_seconds), 1)
    t = np.arange(n_seconds)
    trend = start_price * (1.0 + drift * np.minimum(t / ds, 1.0))
    walk = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, volatility, n_seconds - 1))])
    return trend + walk


@dataclass
class FundamentalSeries:
    values: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        self.values = check_array(self.values, name="fundamental values", min_length=1)
        if self.source not in ("historical", "synthetic"):
            raise ValueError("source must be historical or synthetic")

    def per_step(self, steps_per_second=10):
        return expand_to_steps(self.values, steps_per_second)
