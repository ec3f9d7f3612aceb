import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flashsim import agents as ag
from flashsim._rng import AgentStream, make_keys, normal, uniform
from flashsim.book import BUY, SELL


def test_streams_reproducible_and_independent():
    a, b, c = AgentStream(3, 0), AgentStream(3, 0), AgentStream(3, 1)
    xa = [a.random() for _ in range(100)]
    assert xa == [b.random() for _ in range(100)]
    assert xa != [c.random() for _ in range(100)]


def test_uniform_and_normal_moments():
    keys = make_keys(11, 1)
    ctr = np.zeros(1, dtype=np.int64)
    u = np.array([uniform(keys, ctr, 0) for _ in range(40000)])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    z = np.array([normal(keys, ctr, 0) for _ in range(40000)])
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


def test_fundamental_probability_values():
    # (0.139 * 2 + 0.4562 * 8) / 30
    assert ag.fundamental_mu(0.139, 0.4562, 30, -2.0) == pytest.approx((0.278 + 3.6496) / 30)
    assert ag.fundamental_mu(0.139, 0.4562, 30, 50.0) == 1.0
    assert ag.fundamental_mu(0.139, 0.4562, 30, 0.0) == 0.0


def test_fundamental_trader_side_and_schedule():
    p = ag.FundamentalParams(kappa1=100.0, kappa2=0.0, n_ft=1, interval_steps=100)
    rng = AgentStream(0)
    assert ag.fundamental_step(p, 101.0, 100.0, 200, rng).side == "buy"
    assert ag.fundamental_step(p, 99.0, 100.0, 300, rng).side == "sell"
    assert ag.fundamental_step(p, 99.0, 100.0, 301, rng) is None
    assert ag.fundamental_step(p, 100.0, 100.0, 400, rng) is None


def test_momentum_update_and_theta():
    assert ag.momentum_update(1.0, 0.9, 2.0) == pytest.approx(0.1 + 1.8)
    assert ag.momentum_theta(0.3, 10.0, 0.0, 30) == 0.0
    assert ag.momentum_theta(0.3, 10.0, 5.0, 30) == pytest.approx(0.01 * np.tanh(50.0))
    # magnitude only: the side comes from the sign of m
    assert ag.momentum_theta(0.3, 10.0, -0.1, 30) == ag.momentum_theta(0.3, 10.0, 0.1, 30)


def test_momentum_follows_trend():
    p = ag.MomentumParams(alpha=0.9, beta=300.0, n_traders=1)
    common = ag.CommonAgentParams(rho=1.0)
    m, intents = ag.momentum_step(p, 100.5, 100.0, AgentStream(1), common)
    assert m > 0
    sides = {i.side for i in intents if i.kind in ("limit", "market")}
    assert sides == {"buy"}
    lim = [i for i in intents if i.kind == "limit"][0]
    assert lim.price < 100.5


@settings(max_examples=300, deadline=None)
@given(st.floats(50.0, 150.0), st.floats(0.0, 20.0), st.sampled_from([BUY, SELL]))
def test_limit_price_strictly_passive(mid, dist, side):
    mid = round(mid * 8) / 8  # mids sit on half ticks
    lvl = ag.limit_price_ticks(mid, dist, side, 0.25)
    price = lvl * 0.25
    if side == BUY:
        assert price < mid and price >= mid - dist - 0.125 - 0.25 - 1e-9
    else:
        assert price > mid and price <= mid + dist + 0.125 + 0.25 + 1e-9


def test_noise_side_balance():
    p = ag.NoiseParams(sigma_nt=30.0, n_nt=30)
    rng = AgentStream(5)
    sides = [i.side for _ in range(4000) for i in ag.noise_step(p, 100.0, rng) if i.kind == "limit"]
    assert len(sides) == 4000
    assert abs(sides.count("buy") / 4000 - 0.5) < 0.03


def test_market_maker_unwind_and_rest():
    p = ag.MarketMakerParams(theta_mm=1.0, delta_mm=0.0, inv_limit=1000, inv_safe=100, rest_steps=50)
    s = ag.MarketMakerState(position=1200)
    rng = AgentStream(2)
    out = ag.market_maker_step(s, p, 100.0, 10, rng)
    assert [i.kind for i in out] == ["cancel_all", "market"] and out[1].side == "sell"
    assert s.unwinding and s.restart_step == 60
    s.position = 100
    assert ag.market_maker_step(s, p, 100.0, 20, rng) == []  # safe again but resting
    assert not s.unwinding
    out = ag.market_maker_step(s, p, 100.0, 61, rng)
    assert [i.kind for i in out] == ["cancel_all", "limit", "limit"]
    bid, ask = out[1], out[2]
    assert bid.side == "buy" and ask.side == "sell"
    assert 96.0 - 0.25 <= bid.price < 100.0 < ask.price <= 104.0 + 0.25


def test_institutional_volume_rule():
    # floor(3000 * 0.09 * 12 / 60) = 54
    assert ag.institutional_volume(3000, 0.09, 12, 10_000) == 54
    assert ag.institutional_volume(0, 0.09, 12, 10_000) == 1
    assert ag.institutional_volume(10 ** 6, 0.09, 12, 7) == 7


def test_institutional_schedule():
    p = ag.InstitutionalParams(rate=0.1, inventory=1000, interval_seconds=12, start_time="14:30")
    s = ag.InstitutionalState(inventory=1000)
    t0 = ag._clock_seconds("14:30")
    assert ag.institutional_step(s, p, 600, 120.0, t0) is None
    assert ag.institutional_step(s, p, 600, 121.0, t0 + 1) is None
    o = ag.institutional_step(s, p, 600, 120.0, t0 + 12)
    assert o.side == "sell" and o.volume == 12 and s.inventory == 988


def test_spiking_runs_in_bursts():
    p = ag.SpikingParams(n_spike=4, mu_spike=1.0, v_spike=100, n_st=1)
    s = ag.SpikingState()
    rng = AgentStream(9)
    assert ag.spiking_step(s, p, rng) is None
    burst = [ag.spiking_step(s, p, rng) for _ in range(4)]
    assert len({o.side for o in burst}) == 1 and all(o.volume == 100 for o in burst)
    assert s.remaining == 0


@pytest.mark.parametrize("obj", [
    ag.CommonAgentParams(gamma=0.0), ag.CommonAgentParams(delta=1.5),
    ag.FundamentalParams(interval_steps=0), ag.MomentumParams(alpha=0.0, beta=1.0),
    ag.NoiseParams(n_nt=-1), ag.MarketMakerParams(inv_safe=8000),
    ag.InstitutionalParams(rate=1.5), ag.SpikingParams(n_spike=0),
])
def test_invalid_params(obj):
    with pytest.raises(ValueError):
        obj.validate()
