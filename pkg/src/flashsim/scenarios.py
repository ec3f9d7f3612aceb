"""Crash experiments: the flash-crash amplitude, mini-crash detection and
Monte Carlo sweeps of one model parameter.
"""
import copy
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .config import with_params
from .facts import per_second_prices
from .kernel import ConfigError, SimConfig, clock_to_step, run

SWEEP_KEYS = {
    "r": "institutional.rate",
    "eps_limit": "market_makers.inv_limit",
    "S_interval": "fundamental_traders.interval_steps",
}


@dataclass
class CrashMetrics:
    twap_ref: float
    p_min: float
    amplitude: float
    sell_algo_duration: float  # seconds, nan when the seller did not finish
    min_step: int
    bid_depth_ratio: float  # lowest bid depth after the seller starts / morning mean

    def to_dict(self):
        return asdict(self)


def twap(mid, start, stop):
    """Time-weighted average of a per-step price over ``[start, stop)``."""
    seg = np.asarray(mid[start:stop], dtype=float)
    if len(seg) == 0 or np.isnan(seg).all():
        raise ValueError("no valid prices in the TWAP window")
    return float(np.nanmean(seg))


def amplitude(twap_ref, p_min):
    if twap_ref <= 0:
        raise ValueError("reference price must be positive")
    return abs(twap_ref - p_min) / twap_ref


def crash_metrics(record, ref_start="14:00", ref_stop="14:05", morning_stop="12:30"):
    cfg = record.config
    mid = record.mid_filled()
    a = clock_to_step(ref_start, cfg)
    b = clock_to_step(ref_stop, cfg)
    if b > record.n_steps:
        raise ValueError("session ends before the TWAP window")
    ref = twap(mid, a, b)
    k = a + int(np.nanargmin(mid[a:]))
    sps = cfg.steps_per_second
    if record.ins_done_step >= 0:
        dur = (record.ins_done_step - record.ins_first_step) / sps
    else:
        dur = np.nan
    s0 = clock_to_step(cfg.institutional.start_time, cfg)
    m1 = min(clock_to_step(morning_stop, cfg), record.n_steps)
    morning = record.bid_depth[cfg.warmup_steps:m1].mean() if m1 > cfg.warmup_steps else np.nan
    after = record.bid_depth[s0:] if s0 < record.n_steps else record.bid_depth[a:]
    ratio = float(after.min() / morning) if morning > 0 else np.nan
    return CrashMetrics(twap_ref=ref, p_min=float(mid[k]), amplitude=amplitude(ref, mid[k]),
                        sell_algo_duration=dur, min_step=int(k), bid_depth_ratio=ratio)


def run_flash_crash_scenario(config: SimConfig):
    if not config.institutional.enabled:
        raise ConfigError("flash-crash scenario needs institutional.enabled: true")
    rec = run(config)
    return rec, crash_metrics(rec)


# --------------------------------------------------------------------------
# mini crashes


@dataclass
class MiniCrashEvent:
    kind: str  # "crash" | "flare_up"
    k: float
    window: int  # seconds
    extremum_step: int
    prominence: float  # price units
    sigma_minute: float
    move: float  # relative move from the reference extremum

    def to_dict(self):
        return asdict(self)


def prominences(x, peaks, wlen=None):
    """Topographic prominence of each peak index in ``x``.

    From the peak, walk left and right until terrain strictly higher than
    the peak (or the edge of the ``wlen`` window); the key col on each side
    is the lowest point passed, and the prominence is the peak height minus
    the higher of the two cols.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.empty(len(peaks))
    for j, p in enumerate(peaks):
        lo, hi = 0, n - 1
        if wlen is not None:
            half = int(wlen) // 2
            lo, hi = max(0, p - half), min(n - 1, p + half)
        h = x[p]
        col_l = h
        i = p
        while i > lo:
            i -= 1
            if x[i] > h:
                break
            col_l = min(col_l, x[i])
        col_r = h
        i = p
        while i < hi:
            i += 1
            if x[i] > h:
                break
            col_r = min(col_r, x[i])
        out[j] = h - max(col_l, col_r)
    return out


def minute_sigma(px, seconds_per_minute=60):
    """Standard deviation of minute price changes, relative to the mean price."""
    m = np.asarray(px, dtype=float)[::seconds_per_minute]
    if len(m) < 3:
        raise ValueError("need at least 3 minutes of prices")
    s = float(np.std(np.diff(m), ddof=1) / np.mean(m))
    if s == 0:
        raise ValueError("minute-level returns have zero standard deviation")
    return s


def _troughs(x, w):
    # index i whose value is strictly below [i-w, i) and not above (i, i+w]
    n = len(x)
    out = []
    for i in range(1, n - 1):
        v = x[i]
        if v >= x[i - 1] or v > x[i + 1]:
            continue
        if v >= x[max(0, i - w):i].min():
            continue
        if i + 1 < n and v > x[i + 1:min(n, i + w + 1)].min():
            continue
        out.append(i)
    return out


def _detect_troughs(x, k, w, recovery, scale, sigma, move):
    events = []
    for i in _troughs(x, w):
        left = x[max(0, i - move):i]
        ref = float(left.max())
        drop = ref - x[i]
        if drop <= k * sigma * scale:
            continue
        after = x[i + 1:i + w + 1]
        if len(after) == 0 or after.max() - x[i] < recovery * drop:
            continue
        events.append((i, drop / scale))
    return events


def detect_mini_crashes(mid_1s, k, window=600, recovery=0.5, move_seconds=60,
                        steps_per_second=1, sigma=None):
    """Crash and flare-up events in a 1 s price series.

    An extremum qualifies when it is the lowest (highest) price within
    ``window`` seconds on either side, the move from the highest (lowest)
    price in the preceding ``move_seconds`` exceeds ``k`` standard deviations of
    minute-level returns, and the price takes back at least ``recovery`` of
    the move inside the following window.  The event amplitude is the
    extremum's prominence within the window, which must itself exceed the
    ``k`` sd threshold (a move that only half reverses a small drop is not
    a crash).
    """
    x = np.asarray(mid_1s, dtype=float)
    if np.isnan(x).any():
        raise ValueError("price series contains NaN")
    if sigma is None:
        sigma = minute_sigma(x)
    scale = float(np.mean(x))
    w = int(window)
    out = []
    for kind, y in (("crash", x), ("flare_up", -x)):
        # a flare-up of x is a trough of -x
        ev = _detect_troughs(y, k, w, recovery, scale, sigma, int(move_seconds))
        if not ev:
            continue
        idx = [i for i, _ in ev]
        prom = prominences(-y, idx, wlen=2 * w + 1)
        for (i, mv), pr in zip(ev, prom):
            if pr <= k * sigma * scale:
                continue
            out.append(MiniCrashEvent(kind=kind, k=k, window=w, extremum_step=i * steps_per_second,
                                      prominence=float(pr), sigma_minute=sigma, move=float(mv)))
    out.sort(key=lambda e: (e.extremum_step, e.kind))
    return out


def mid_per_second(record):
    """1 s last-value mid series of a record, warm-up dropped."""
    return per_second_prices(record.mid, record.config.warmup_steps,
                             record.config.steps_per_second)


@dataclass
class MiniCrashResult:
    events: List[MiniCrashEvent]
    counts: dict  # k -> number of crash events
    flare_counts: dict
    mean_prominence: dict  # k -> mean crash prominence (nan without events)

    def to_dict(self):
        return {"counts": self.counts, "flare_counts": self.flare_counts,
                "mean_prominence": self.mean_prominence,
                "events": [e.to_dict() for e in self.events]}


def mini_crash_metrics(record, ks=(2, 3, 4), window=600, recovery=0.5, move_seconds=60):
    px = mid_per_second(record)
    sigma = minute_sigma(px)
    events, counts, flares, prom = [], {}, {}, {}
    for k in ks:
        ev = detect_mini_crashes(px, k, window, recovery, move_seconds, sigma=sigma)
        events += ev
        crashes = [e for e in ev if e.kind == "crash"]
        counts[k] = len(crashes)
        flares[k] = len(ev) - len(crashes)
        prom[k] = float(np.mean([e.prominence for e in crashes])) if crashes else np.nan
    return MiniCrashResult(events=events, counts=counts, flare_counts=flares, mean_prominence=prom)


def run_mini_crash_scenario(config: SimConfig, ks=(2, 3, 4), window=600, recovery=0.5,
                            move_seconds=60):
    if config.spiking.n_st < 1:
        raise ConfigError("mini-crash scenario needs spiking.n_st >= 1")
    rec = run(config)
    return rec, mini_crash_metrics(rec, ks, window, recovery, move_seconds)


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepPoint:
    value: float
    n_runs: int
    q40: float = np.nan
    q50: float = np.nan
    q60: float = np.nan
    mean_count: float = np.nan
    mean_amplitude: float = np.nan
    runs: list = field(default_factory=list, repr=False)


@dataclass
class SweepResult:
    param: str
    key: str
    grid: list
    mode: str
    points: List[SweepPoint]

    def medians(self):
        return np.array([p.q50 for p in self.points])

    def mean_counts(self):
        return np.array([p.mean_count for p in self.points])

    def rows(self):
        return [{"param": self.param, "value": p.value, "n_runs": p.n_runs, "q40": p.q40,
                 "q50": p.q50, "q60": p.q60, "mean_count": p.mean_count,
                 "mean_amplitude": p.mean_amplitude} for p in self.points]


def _one_run(args):
    cfg, mode, ks, window, recovery, move = args
    try:
        if mode == "flash":
            return crash_metrics(run(cfg)).to_dict()
        res = mini_crash_metrics(run(cfg), ks, window, recovery, move)
        return {"counts": res.counts, "mean_prominence": res.mean_prominence}
    except Exception as exc:  # recorded, the point reports its completed-run count
        return {"error": f"{type(exc).__name__}: {exc}"}


def _map(fn, items, threads):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def sweep(base_config: SimConfig, param, grid, n_runs, seed=0, mode="flash", ks=(2, 3, 4),
          count_k=3, window=600, recovery=0.5, move_seconds=60, threads=1):
    """Monte Carlo sweep of one parameter.

    Run ``j`` at every grid point uses seed ``seed + j`` so the points share
    random numbers.  ``mode`` is ``flash`` (amplitude quantiles) or ``mini``
    (mean crash count and prominence at ``count_k``).
    """
    if mode not in ("flash", "mini"):
        raise ValueError("mode must be flash or mini")
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    key = SWEEP_KEYS.get(param, param)
    jobs = []
    for v in grid:
        cfg_v = with_params(base_config, **{key: v})
        for j in range(n_runs):
            c = copy.deepcopy(cfg_v)
            c.seed = int(seed) + j
            jobs.append((c, mode, tuple(ks), window, recovery, move_seconds))
    results = _map(_one_run, jobs, threads)
    points = []
    for g, v in enumerate(grid):
        runs = results[g * n_runs:(g + 1) * n_runs]
        ok = [r for r in runs if "error" not in r]
        pt = SweepPoint(value=v, n_runs=len(ok), runs=runs)
        if ok and mode == "flash":
            amp = np.array([r["amplitude"] for r in ok])
            pt.q40, pt.q50, pt.q60 = (float(q) for q in np.quantile(amp, [0.4, 0.5, 0.6]))
        elif ok:
            cnt = np.array([r["counts"][count_k] for r in ok], dtype=float)
            pt.mean_count = float(cnt.mean())
            proms = [r["mean_prominence"][count_k] for r in ok]
            proms = [p for p in proms if np.isfinite(p)]
            pt.mean_amplitude = float(np.mean(proms)) if proms else np.nan
        points.append(pt)
    return SweepResult(param=param, key=key, grid=list(grid), mode=mode, points=points)
