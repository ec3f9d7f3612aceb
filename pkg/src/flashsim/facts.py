"""Stylised facts of 1 s mid-price returns and the weighted distance between
a simulated and a historical return series.

The distance has four parts: tail index (Hill), volatility, return ACF over
lags 30-32/60-62/90-92 and squared-return ACF over lags 1-3 plus the same
three groups.  Each part is weighted by the inverse of its block-bootstrap
sampling variance on the historical series.
"""
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_array, check_is_fitted, check_random_state

ACF_R_LAGS = (30, 31, 32, 60, 61, 62, 90, 91, 92)
ACF_R2_LAGS = (1, 2, 3, 30, 31, 32, 60, 61, 62, 90, 91, 92)
PARTS = ("hill", "vol", "acf_r", "acf_r2")
TAIL_FRACTION = 0.05
BLOCK_SIZE = 1800
N_BOOT = 60

# the nine coverage moments: inverse Hill, volatility, three-lag averaged ACFs
COVERAGE_MOMENTS = (
    "inv_hill", "vol",
    "acf_r_30", "acf_r_60", "acf_r_90",
    "acf_r2_1", "acf_r2_30", "acf_r2_60", "acf_r2_90",
)


class DegenerateSeriesError(ValueError):
    pass


def per_second_prices(mid, warmup_steps=0, steps_per_second=10):
    """Last valid mid of each second after warm-up.

    Seconds without any valid mid repeat the previous second's price.
    """
    mid = np.asarray(mid, dtype=np.float64)
    n_sec = len(mid) // steps_per_second
    first = -(-warmup_steps // steps_per_second)
    if n_sec - first < 1:
        raise ValueError("no whole second of data after warm-up")
    m = mid[: n_sec * steps_per_second].reshape(n_sec, steps_per_second)
    valid = ~np.isnan(m)
    has = valid.any(axis=1)
    if not has.any():
        raise ValueError("mid-price series has no valid values")
    last_idx = steps_per_second - 1 - np.argmax(valid[:, ::-1], axis=1)
    px = np.where(has, m[np.arange(n_sec), last_idx], np.nan)
    idx = np.where(has, np.arange(n_sec), 0)
    np.maximum.accumulate(idx, out=idx)
    px = px[idx]
    if np.isnan(px[0]):
        px[: np.argmax(has)] = px[np.argmax(has)]
    return px[first:]


def resample_returns(mid, warmup_steps=0, steps_per_second=10):
    """Simple 1 s returns from a per-step mid-price series."""
    px = per_second_prices(mid, warmup_steps, steps_per_second)
    if len(px) < 2:
        raise ValueError("need at least 2 s of data after warm-up")
    return px[1:] / px[:-1] - 1.0


def hill_estimator(abs_returns, tail_fraction=TAIL_FRACTION):
    """Hill estimate (of the inverse tail index) from the top order statistics."""
    x = np.abs(np.asarray(abs_returns, dtype=np.float64))
    x = x[x > 0]
    k = int(np.floor(tail_fraction * len(x)))
    if k < 20 or k + 1 > len(x):
        raise DegenerateSeriesError(
            f"need >= 20 positive tail observations, got k={k} from {len(x)} values")
    top = -np.partition(-x, k)[: k + 1]
    top.sort()
    ref = top[0]  # (k+1)-th largest
    return float(np.mean(np.log(top[1:] / ref)))


def acf(series, lag):
    """Sample autocorrelation with the global mean and variance."""
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    if lag < 0 or (lag > 0 and lag >= n / 2):
        raise ValueError(f"lag {lag} must be in [0, n/2) for n={n}")
    d = x - x.mean()
    den = float(np.dot(d, d))
    if den == 0.0:
        raise DegenerateSeriesError("zero-variance series has no autocorrelation")
    if lag == 0:
        return 1.0
    return float(np.dot(d[:-lag], d[lag:]) / den)


def _acfs(x, lags):
    d = x - x.mean()
    den = float(np.dot(d, d))
    if den == 0.0:
        raise DegenerateSeriesError("zero-variance series has no autocorrelation")
    return np.array([np.dot(d[:-l], d[l:]) / den for l in lags])


@dataclass
class MomentVector:
    hill: float
    vol: float
    acf_r: np.ndarray
    acf_r2: np.ndarray

    def coverage_moments(self):
        """The nine coverage moments as a dict."""
        a, b = self.acf_r, self.acf_r2
        return {
            "inv_hill": 1.0 / self.hill if self.hill > 0 else np.inf,
            "vol": self.vol,
            "acf_r_30": a[0:3].mean(), "acf_r_60": a[3:6].mean(), "acf_r_90": a[6:9].mean(),
            "acf_r2_1": b[0:3].mean(), "acf_r2_30": b[3:6].mean(),
            "acf_r2_60": b[6:9].mean(), "acf_r2_90": b[9:12].mean(),
        }

    def to_dict(self):
        return {"hill": self.hill, "vol": self.vol,
                "acf_r": dict(zip(ACF_R_LAGS, map(float, self.acf_r))),
                "acf_r2": dict(zip(ACF_R2_LAGS, map(float, self.acf_r2)))}


def moment_vector(returns, tail_fraction=TAIL_FRACTION):
    r = check_array(returns, name="returns", min_length=2 * max(ACF_R2_LAGS) + 2)
    return MomentVector(
        hill=hill_estimator(np.abs(r), tail_fraction),
        vol=float(np.std(r, ddof=1)),
        acf_r=_acfs(r, ACF_R_LAGS),
        acf_r2=_acfs(r * r, ACF_R2_LAGS),
    )


def differentials(a: MomentVector, b: MomentVector):
    """(Δ_Hill, Δ_V, Δ_ACF1, Δ_ACF2) between two moment vectors."""
    return np.array([
        abs(a.hill - b.hill),
        abs(a.vol - b.vol),
        float(np.mean(np.abs(a.acf_r - b.acf_r))),
        float(np.mean(np.abs(a.acf_r2 - b.acf_r2))),
    ])


def weighted_distance(delta, weights):
    return float(np.dot(np.asarray(weights, dtype=float), np.asarray(delta, dtype=float)))


def block_bootstrap(x, block_size, rng):
    """One circular block-bootstrap resample of ``x`` (same length)."""
    n = len(x)
    n_blocks = -(-n // block_size)
    starts = rng.integers(0, n, size=n_blocks)
    idx = (starts[:, None] + np.arange(block_size)[None, :]).ravel()[:n] % n
    return x[idx]


@dataclass
class DistanceWeights:
    weights: np.ndarray
    sigma2: np.ndarray
    block_size: int = BLOCK_SIZE
    n_boot: int = N_BOOT
    boot_distances: np.ndarray = field(default=None, repr=False)
    moment_sd: dict = field(default=None, repr=False)
    reference: MomentVector = field(default=None, repr=False)

    @property
    def d_critical(self):
        """95th percentile of bootstrap distances to the original series."""
        return float(np.percentile(self.boot_distances, 95))

    def to_dict(self):
        return {
            "weights": dict(zip(PARTS, map(float, self.weights))),
            "sigma2": dict(zip(PARTS, map(float, self.sigma2))),
            "block_size": self.block_size, "n_boot": self.n_boot,
            "d_critical": self.d_critical,
            "moment_sd": {k: float(v) for k, v in (self.moment_sd or {}).items()},
        }


def bootstrap_weights(hist_returns, block_size=BLOCK_SIZE, n_boot=N_BOOT, seed=0,
                      tail_fraction=TAIL_FRACTION):
    """Inverse bootstrap variances of the four differentials on ``hist_returns``.

    Also keeps the bootstrap distances D^b (for the critical value) and the
    bootstrap standard deviation of each coverage moment.
    """
    r = check_array(hist_returns, name="historical returns", min_length=2 * block_size)
    rng = check_random_state(seed)
    ref = moment_vector(r, tail_fraction)
    deltas = np.empty((n_boot, 4))
    cov = {k: np.empty(n_boot) for k in COVERAGE_MOMENTS}
    for b in range(n_boot):
        mv = moment_vector(block_bootstrap(r, block_size, rng), tail_fraction)
        deltas[b] = differentials(mv, ref)
        for k, v in mv.coverage_moments().items():
            cov[k][b] = v
    sigma2 = deltas.var(axis=0, ddof=1)
    for name, s2 in zip(PARTS, sigma2):
        if not s2 > 0:
            raise DegenerateSeriesError(f"bootstrap variance of {name} differential is zero")
    w = 1.0 / sigma2
    return DistanceWeights(
        weights=w, sigma2=sigma2, block_size=block_size, n_boot=n_boot,
        boot_distances=deltas @ w,
        moment_sd={k: float(np.std(v, ddof=1)) for k, v in cov.items()},
        reference=ref,
    )


def distance(sim_returns, hist_returns, weights, tail_fraction=TAIL_FRACTION):
    """Weighted stylised-facts distance D between two return series."""
    w = weights.weights if isinstance(weights, DistanceWeights) else np.asarray(weights, float)
    a = moment_vector(sim_returns, tail_fraction)
    b = moment_vector(hist_returns, tail_fraction)
    return weighted_distance(differentials(a, b), w)


class StylisedFactsDistance:
    """Estimator form: ``fit`` on historical returns builds the weights,
    ``score``/``distance`` evaluates simulated series against them."""

    def __init__(self, block_size=BLOCK_SIZE, n_boot=N_BOOT, tail_fraction=TAIL_FRACTION, seed=0):
        self.block_size = block_size
        self.n_boot = n_boot
        self.tail_fraction = tail_fraction
        self.seed = seed

    def get_params(self, deep=True):
        return {"block_size": self.block_size, "n_boot": self.n_boot,
                "tail_fraction": self.tail_fraction, "seed": self.seed}

    def set_params(self, **params):
        for k, v in params.items():
            if k not in self.get_params():
                raise ValueError(f"invalid parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, X, y=None):
        self.hist_returns_ = check_array(X, name="historical returns", min_length=2 * self.block_size)
        self.weights_ = bootstrap_weights(self.hist_returns_, self.block_size, self.n_boot,
                                          self.seed, self.tail_fraction)
        self.moments_ = self.weights_.reference
        return self

    def transform(self, X):
        """Differential vector (4 parts) of each simulated series in ``X``."""
        check_is_fitted(self, "weights_")
        series = [X] if np.ndim(X[0]) == 0 else X
        return np.array([differentials(moment_vector(s, self.tail_fraction), self.moments_)
                         for s in series])

    def distance(self, sim_returns):
        check_is_fitted(self, "weights_")
        return weighted_distance(self.transform(sim_returns)[0], self.weights_.weights)

    def score(self, X, y=None):
        """Negative distance, so larger is better."""
        return -self.distance(X)
