import copy
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import peak_prominences

from flashsim.config import preset_config
from flashsim.kernel import SimConfig, SimRecord, clock_to_step
from flashsim.scenarios import (
    amplitude, crash_metrics, detect_mini_crashes, minute_sigma, prominences, sweep, twap,
)


def test_amplitude_value():
    assert amplitude(1100.0, 1053.5) == pytest.approx(46.5 / 1100)
    assert amplitude(1100.0, 1053.5) == pytest.approx(0.042272727, abs=1e-9)
    with pytest.raises(ValueError):
        amplitude(0.0, 1.0)


def test_twap_ignores_gaps():
    assert twap(np.array([1.0, np.nan, 3.0]), 0, 3) == 2.0
    with pytest.raises(ValueError):
        twap(np.array([np.nan, np.nan]), 0, 2)


def _fake_record(total=324_000):
    cfg = SimConfig(total_steps=total)
    cfg.institutional.enabled = True
    mid = np.full(total, 1100.0)
    k = clock_to_step("14:40", cfg)
    mid[k] = 1053.5
    mid[k + 1:k + 50] = np.nan
    bd = np.full(total, 1000)
    bd[k] = 50
    z = np.zeros(total, dtype=np.int64)
    return SimRecord(config=cfg, mid=mid, best_bid=z, best_ask=z, bid_depth=bd, ask_depth=bd,
                     volume=z, last_minute_volume=z, inventory=np.zeros((total, 7), np.int64),
                     trades={}, agent_type=z[:0], final_positions=z[:0], discarded_volume=0,
                     n_orders=0, ins_first_step=clock_to_step("14:30", cfg) + 120,
                     ins_done_step=clock_to_step("14:47", cfg) + 120, initial_price=1100.0), k


def test_crash_metrics_on_constructed_record():
    rec, k = _fake_record()
    m = crash_metrics(rec)
    assert m.twap_ref == 1100.0 and m.p_min == 1053.5 and m.min_step == k
    assert m.amplitude == pytest.approx(46.5 / 1100)
    assert m.sell_algo_duration == 17 * 60
    assert m.bid_depth_ratio == pytest.approx(0.05)


def test_prominence_example():
    np.testing.assert_array_equal(prominences([1, 3, 2, 5, 1], [1, 3]), [1, 4])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=3, max_size=80), st.data())
def test_prominence_matches_scipy(vals, data):
    x = np.asarray(vals, dtype=float)
    peaks = np.array(sorted(set(data.draw(st.lists(st.integers(0, len(x) - 1), min_size=1)))))
    wlen = data.draw(st.one_of(st.none(), st.integers(3, 2 * len(x) + 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ref = peak_prominences(x, peaks, wlen=wlen)[0]
    np.testing.assert_allclose(prominences(x, peaks, wlen=wlen), ref)


def _background(n=3 * 3600, period=7200.0, amp=27.0):
    t = np.arange(n)
    # a sine peak sits at t = period / 4
    return 1000.0 + amp * np.sin(2 * np.pi * t / period), t


def _with_v(x, centre, depth, half=10):
    y = x.copy()
    for j in range(-half, half + 1):
        y[centre + j] -= depth * (1 - abs(j) / half)
    return y


@pytest.mark.parametrize("k", [2, 3, 4])
def test_single_v_is_one_crash(k):
    x, _ = _background()
    y = _with_v(x, 1800, 0.008 * 1000)  # 80 bp over 20 s
    ev = detect_mini_crashes(y, k)
    assert [(e.kind, e.extremum_step) for e in ev] == [("crash", 1800)]
    assert ev[0].prominence == pytest.approx(8.0, abs=0.1)
    assert ev[0].prominence > k * ev[0].sigma_minute * y.mean()


def test_background_alone_has_no_events():
    x, _ = _background()
    assert detect_mini_crashes(x, 2) == []


@pytest.mark.parametrize("x", [np.linspace(1000, 1010, 5000), np.linspace(1010, 1000, 5000),
                               1000 + np.cumsum(np.abs(np.random.default_rng(0).normal(0, .1, 5000)))])
def test_monotone_has_no_events(x):
    assert detect_mini_crashes(x, 2) == []


def test_shallow_or_unrecovered_drop_is_ignored():
    x, _ = _background()
    y = _with_v(x, 1800, 0.5)
    assert detect_mini_crashes(y, 2) == []
    z = x.copy()
    z[1790:] -= np.minimum(np.arange(len(z) - 1790), 10) * 0.8  # 8-point drop that stays down
    assert [e for e in detect_mini_crashes(z, 2) if e.kind == "crash"] == []


def test_mirror_symmetry():
    x, _ = _background()
    rng = np.random.default_rng(1)
    y = _with_v(x, 1800, 8.0) + np.cumsum(rng.normal(0, 0.05, len(x)))
    y = _with_v(y, 6000, 6.0)
    mirrored = 2 * y.mean() - y
    a = detect_mini_crashes(y, 2)
    b = detect_mini_crashes(mirrored, 2)
    flip = {"crash": "flare_up", "flare_up": "crash"}
    assert sorted((flip[e.kind], e.extremum_step) for e in a) == \
        sorted((e.kind, e.extremum_step) for e in b)
    assert len(a) >= 2


def test_minute_sigma_value():
    px = 1000 + np.repeat(np.array([0, 1, 0, 1, 0], float), 60)
    d = np.diff(px[::60])
    assert minute_sigma(px) == pytest.approx(np.std(d, ddof=1) / px.mean())
    with pytest.raises(ValueError):
        minute_sigma(np.full(600, 5.0))


def test_nan_input_rejected():
    with pytest.raises(ValueError):
        detect_mini_crashes(np.array([1.0, np.nan] * 200), 2)


@pytest.fixture(scope="module")
def tiny_mini():
    cfg = preset_config("minicrash")
    cfg.total_steps = 15_000
    return cfg


def test_sweep_shares_seeds_across_points(tiny_mini):
    res = sweep(tiny_mini, "eps_limit", [4000, 4000], n_runs=2, seed=3, mode="mini", window=120)
    a, b = res.points
    assert a.runs == b.runs and a.n_runs == 2
    assert res.key == "market_makers.inv_limit"
    assert np.isfinite(res.mean_counts()).all()


def test_sweep_degenerate_inputs(tiny_mini):
    with pytest.raises(ValueError):
        sweep(tiny_mini, "r", [0.05], n_runs=0)
    with pytest.raises(ValueError):
        sweep(tiny_mini, "r", [0.05], n_runs=1, mode="other")
    # a flash-mode sweep of a session that ends before the reference window records errors
    res = sweep(tiny_mini, "r", [0.05], n_runs=1, mode="flash")
    assert res.points[0].n_runs == 0 and "error" in res.points[0].runs[0]
    assert np.isnan(res.medians()[0])
