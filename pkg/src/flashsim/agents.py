"""Trader behaviours.

Every rule is a small compiled function of (parameters, market view, random
stream) so the simulation loop and the Python wrappers below run the exact
same code.  The wrappers return :class:`OrderIntent` lists and are what tests
and notebooks use to poke at a single agent.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from ._rng import AgentStream, normal, uniform
from .book import BUY, SELL

NO_ORDER = -1


@dataclass
class OrderIntent:
    kind: str  # "limit" | "market" | "cancel" | "cancel_all"
    side: Optional[str] = None
    volume: int = 0
    price: Optional[float] = None
    order_id: Optional[int] = None


# --------------------------------------------------------------------------
# parameters


@dataclass
class CommonAgentParams:
    """Order-flow constants shared by momentum and noise traders."""

    rho: float = 0.2
    delta: float = 0.005
    order_volume: int = 100
    mu_ell: float = 1.9349
    sigma_ell: float = 0.3
    gamma: float = 10.0  # momentum-to-probability scaling, shared by LMT and SMT

    def validate(self):
        if self.gamma <= 0:
            raise ValueError("orders.gamma must be > 0")
        _check_prob("orders.delta", self.delta)
        if self.rho < 0:
            raise ValueError("orders.rho must be >= 0")
        if self.order_volume <= 0:
            raise ValueError("orders.order_volume must be > 0")
        if self.sigma_ell < 0:
            raise ValueError("orders.sigma_ell must be >= 0")


@dataclass
class FundamentalParams:
    kappa1: float = 0.1390
    kappa2: float = 0.4562
    n_ft: int = 30
    interval_steps: int = 100
    phase: int = 0

    def validate(self):
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("fundamental_traders.kappa1/kappa2 must be >= 0")
        if self.interval_steps < 1:
            raise ValueError("fundamental_traders.interval_steps must be >= 1")
        _check_count("fundamental_traders.n", self.n_ft)


@dataclass
class MomentumParams:
    alpha: float
    beta: float
    gamma: float = 10.0
    n_traders: int = 30
    momentum: float = 0.0

    def validate(self, name="momentum"):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"{name}.alpha must be in (0, 1]")
        if self.beta < 0:
            raise ValueError(f"{name}.beta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("momentum.gamma must be > 0")
        _check_count(f"{name}.n", self.n_traders)


@dataclass
class NoiseParams:
    sigma_nt: float = 0.3403
    n_nt: int = 30

    def validate(self):
        if self.sigma_nt < 0:
            raise ValueError("noise_traders.sigma_nt must be >= 0")
        _check_count("noise_traders.n", self.n_nt)


@dataclass
class MarketMakerParams:
    theta_mm: float = 0.6624
    delta_mm: float = 0.05
    edge_max: float = 4.0
    inv_limit: int = 7000
    inv_safe: int = 101
    rest_steps: int = 12000
    n_mm: int = 20

    def validate(self):
        _check_prob("market_makers.theta", self.theta_mm)
        _check_prob("market_makers.delta", self.delta_mm)
        if self.edge_max < 0:
            raise ValueError("market_makers.edge_max must be >= 0")
        if not 0 <= self.inv_safe < self.inv_limit:
            raise ValueError("market_makers: need 0 <= inv_safe < inv_limit")
        if self.rest_steps < 0:
            raise ValueError("market_makers.rest_steps must be >= 0")
        _check_count("market_makers.n", self.n_mm)


@dataclass
class MarketMakerState:
    position: int = 0
    unwinding: bool = False
    restart_step: int = 0


@dataclass
class InstitutionalParams:
    rate: float = 0.09
    inventory: int = 120_000
    interval_seconds: int = 12
    start_time: str = "14:30"
    enabled: bool = True

    def validate(self):
        if not 0 < self.rate < 1:
            raise ValueError("institutional.rate must be in (0, 1)")
        if self.inventory < 0:
            raise ValueError("institutional.inventory must be >= 0")
        if self.interval_seconds < 1:
            raise ValueError("institutional.interval_seconds must be >= 1")


@dataclass
class InstitutionalState:
    inventory: int


@dataclass
class SpikingParams:
    n_spike: int = 4
    mu_spike: float = 0.005
    v_spike: int = 100
    n_st: int = 0

    def validate(self):
        if self.n_spike < 1:
            raise ValueError("spiking.n_spike must be >= 1")
        _check_prob("spiking.mu_spike", self.mu_spike)
        if self.v_spike <= 0:
            raise ValueError("spiking.v_spike must be > 0")
        _check_count("spiking.n", self.n_st)


@dataclass
class SpikingState:
    remaining: int = 0
    direction: str = "sell"


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def _check_count(name, n):
    if int(n) != n or n < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {n}")


# --------------------------------------------------------------------------
# compiled rules


@njit(cache=True)
def clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True)
def fundamental_mu(kappa1, kappa2, n_ft, mispricing):
    a = abs(mispricing)
    return clamp01((kappa1 * a + kappa2 * a * a * a) / n_ft)


@njit(cache=True)
def fundamental_rule(keys, ctr, i, kappa1, kappa2, n_ft, interval, phase, value, mid, step):
    """Side of the market order to send, or NO_ORDER."""
    if (step - phase) % interval != 0:
        return NO_ORDER
    mu = fundamental_mu(kappa1, kappa2, n_ft, value - mid)
    if uniform(keys, ctr, i) < mu:
        if value > mid:
            return BUY
        if value < mid:
            return SELL
    return NO_ORDER


@njit(cache=True)
def momentum_update(m, alpha, dp):
    return (1.0 - alpha) * m + alpha * dp


@njit(cache=True)
def momentum_theta(beta, gamma, m, n):
    # demand magnitude; the side comes from the sign of m
    return clamp01(beta * abs(np.tanh(gamma * m)) / n)


@njit(cache=True)
def limit_price_ticks(mid, dist, side, tick):
    """Round ``mid -/+ dist`` to the tick grid, strictly on the passive side of mid."""
    mid_t = mid / tick
    if side == BUY:
        lvl = np.int64(np.floor(mid_t - dist / tick + 0.5))
        if lvl >= mid_t - 1e-9:
            lvl = np.int64(np.ceil(mid_t - 1e-9)) - 1
    else:
        lvl = np.int64(np.floor(mid_t + dist / tick + 0.5))
        if lvl <= mid_t + 1e-9:
            lvl = np.int64(np.floor(mid_t + 1e-9)) + 1
    return lvl


@njit(cache=True)
def lognormal_distance(keys, ctr, i, mu_ell, sigma_ell):
    return np.exp(mu_ell + sigma_ell * normal(keys, ctr, i))


@njit(cache=True)
def directional_rule(keys, ctr, i, theta, mu, m):
    """Momentum order decision: (limit side, market side), NO_ORDER when idle."""
    lim = NO_ORDER
    mkt = NO_ORDER
    if uniform(keys, ctr, i) < theta:
        if m > 0:
            lim = BUY
        elif m < 0:
            lim = SELL
    if uniform(keys, ctr, i) < mu:
        if m > 0:
            mkt = BUY
        elif m < 0:
            mkt = SELL
    return lim, mkt


@njit(cache=True)
def noise_rule(keys, ctr, i, theta, mu):
    lim = NO_ORDER
    mkt = NO_ORDER
    if uniform(keys, ctr, i) < theta:
        lim = BUY if uniform(keys, ctr, i) < 0.5 else SELL
    if uniform(keys, ctr, i) < mu:
        mkt = BUY if uniform(keys, ctr, i) < 0.5 else SELL
    return lim, mkt


# market maker actions
MM_IDLE = 0
MM_UNWIND = 1
MM_QUOTE = 2
MM_CANCEL = 3
MM_CANCEL_QUOTE = 4


@njit(cache=True)
def market_maker_rule(keys, ctr, i, position, flag, restart, step,
                      theta_mm, delta_mm, inv_limit, inv_safe, rest_steps):
    """One market maker turn.

    Returns (action, new_flag, new_restart).  ``MM_UNWIND`` means cancel all
    quotes and send a market order against the position; ``MM_QUOTE`` and
    ``MM_CANCEL_QUOTE`` mean post a fresh quote pair (the caller draws edges).
    """
    a = abs(position)
    if a >= inv_limit:
        flag = 1
        restart = step + rest_steps
    if flag == 1 and a <= inv_safe:
        flag = 0
    if flag == 1:
        return MM_UNWIND, flag, restart
    if step > restart:
        cancel = uniform(keys, ctr, i) < delta_mm
        quote = uniform(keys, ctr, i) < theta_mm
        if quote:
            return (MM_CANCEL_QUOTE if cancel else MM_QUOTE), flag, restart
        if cancel:
            return MM_CANCEL, flag, restart
    return MM_IDLE, flag, restart


@njit(cache=True)
def institutional_volume(last_minute_volume, rate, interval_seconds, inventory):
    vol = np.int64(np.floor(last_minute_volume * rate * interval_seconds / 60.0))
    if vol < 1:
        vol = 1
    if vol > inventory:
        vol = inventory
    return vol


@njit(cache=True)
def spiking_rule(keys, ctr, i, remaining, direction, mu_spike, n_spike):
    """Returns (order side or NO_ORDER, remaining, direction)."""
    if remaining > 0:
        return direction, remaining - 1, direction
    if uniform(keys, ctr, i) < mu_spike:
        direction = SELL if uniform(keys, ctr, i) < 0.5 else BUY
        return NO_ORDER, n_spike, direction
    return NO_ORDER, remaining, direction


# --------------------------------------------------------------------------
# Python wrappers

_SIDE = {BUY: "buy", SELL: "sell"}
_CODE = {"buy": BUY, "sell": SELL}


def _draw_cancels(rng, delta, resting):
    return [
        OrderIntent("cancel", order_id=oid)
        for oid in resting
        if uniform(rng.keys, rng.counters, 0) < delta
    ]


def _limit_intent(rng, side, mid, common, tick):
    dist = lognormal_distance(rng.keys, rng.counters, 0, common.mu_ell, common.sigma_ell)
    lvl = limit_price_ticks(mid, dist, side, tick)
    return OrderIntent("limit", _SIDE[side], common.order_volume, float(lvl * tick))


def fundamental_step(params: FundamentalParams, fundamental_value, mid_price, step,
                     rng: AgentStream, order_volume=100):
    """Market order of one fundamental trader this step, if any."""
    if mid_price is None:
        return None
    side = fundamental_rule(rng.keys, rng.counters, 0, params.kappa1, params.kappa2,
                            params.n_ft, params.interval_steps, params.phase,
                            fundamental_value, mid_price, step)
    if side == NO_ORDER:
        return None
    return OrderIntent("market", _SIDE[side], order_volume)


def momentum_step(params: MomentumParams, mid_price, prev_mid, rng: AgentStream,
                  common: CommonAgentParams = None, resting: Sequence[int] = (),
                  tick_size=0.25):
    """Update the trend signal and return ``(momentum, intents)``.

    ``params.momentum`` is updated in place.  Cancels for ``resting`` order
    ids come first, mirroring the order of operations within a turn.
    """
    common = common or CommonAgentParams()
    intents: List[OrderIntent] = _draw_cancels(rng, common.delta, resting)
    if mid_price is not None and prev_mid is not None:
        params.momentum = momentum_update(params.momentum, params.alpha, mid_price - prev_mid)
    m = params.momentum
    theta = momentum_theta(params.beta, params.gamma, m, params.n_traders)
    lim, mkt = directional_rule(rng.keys, rng.counters, 0, theta, theta * common.rho, m)
    if lim != NO_ORDER and mid_price is not None:
        intents.append(_limit_intent(rng, lim, mid_price, common, tick_size))
    if mkt != NO_ORDER:
        intents.append(OrderIntent("market", _SIDE[mkt], common.order_volume))
    return m, intents


def noise_step(params: NoiseParams, mid_price, rng: AgentStream,
               common: CommonAgentParams = None, resting: Sequence[int] = (),
               tick_size=0.25):
    common = common or CommonAgentParams()
    intents = _draw_cancels(rng, common.delta, resting)
    theta = clamp01(params.sigma_nt / params.n_nt) if params.n_nt else 0.0
    lim, mkt = noise_rule(rng.keys, rng.counters, 0, theta, clamp01(theta * common.rho))
    if lim != NO_ORDER and mid_price is not None:
        intents.append(_limit_intent(rng, lim, mid_price, common, tick_size))
    if mkt != NO_ORDER:
        intents.append(OrderIntent("market", _SIDE[mkt], common.order_volume))
    return intents


def market_maker_step(state: MarketMakerState, params: MarketMakerParams, mid_price, step,
                      rng: AgentStream, order_volume=100, tick_size=0.25):
    """One market maker turn; ``state`` is updated in place."""
    action, flag, restart = market_maker_rule(
        rng.keys, rng.counters, 0, state.position, int(state.unwinding), state.restart_step,
        step, params.theta_mm, params.delta_mm, params.inv_limit, params.inv_safe,
        params.rest_steps)
    state.unwinding = bool(flag)
    state.restart_step = int(restart)
    if action == MM_UNWIND:
        side = "buy" if state.position < 0 else "sell"
        return [OrderIntent("cancel_all"), OrderIntent("market", side, order_volume)]
    if action == MM_CANCEL:
        return [OrderIntent("cancel_all")]
    if action in (MM_QUOTE, MM_CANCEL_QUOTE):
        out = [OrderIntent("cancel_all")]
        for side in (BUY, SELL):
            edge = uniform(rng.keys, rng.counters, 0) * params.edge_max
            lvl = limit_price_ticks(mid_price, edge, side, tick_size)
            out.append(OrderIntent("limit", _SIDE[side], order_volume, float(lvl * tick_size)))
        return out
    return []


def institutional_step(state: InstitutionalState, params: InstitutionalParams,
                       last_minute_volume, step_seconds, sim_time):
    """Sell-algorithm child order, if one is due.

    ``sim_time`` is seconds after midnight; ``step_seconds`` is seconds since
    the session opened.
    """
    start = _clock_seconds(params.start_time)
    if not params.enabled or sim_time <= start or state.inventory <= 0:
        return None
    if step_seconds != int(step_seconds) or int(step_seconds) % params.interval_seconds:
        return None
    vol = int(institutional_volume(last_minute_volume, params.rate,
                                   params.interval_seconds, state.inventory))
    state.inventory -= vol
    return OrderIntent("market", "sell", vol)


def spiking_step(state: SpikingState, params: SpikingParams, rng: AgentStream):
    side, remaining, direction = spiking_rule(
        rng.keys, rng.counters, 0, state.remaining, _CODE[state.direction],
        params.mu_spike, params.n_spike)
    state.remaining = int(remaining)
    state.direction = _SIDE[direction]
    if side == NO_ORDER:
        return None
    return OrderIntent("market", _SIDE[side], params.v_spike)


def _clock_seconds(hhmm):
    parts = [int(p) for p in str(hhmm).split(":")]
    while len(parts) < 3:
        parts.append(0)
    return parts[0] * 3600 + parts[1] * 60 + parts[2]
