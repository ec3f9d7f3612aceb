"""Step loop of the market simulation.

One step is ``step_ms`` of trading.  Within a step every agent acts in
registration order (FT, LMT, SMT, NT, MM, INS, ST, optionally shuffled) and
its orders hit the live book at once, so later agents see earlier agents'
impact.  The reference price an agent quotes around is the live mid, or the
last two-sided mid while one side of the book is empty.  The snapshot at the
end of the step is what gets recorded.
"""
from collections import namedtuple
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional
import logging

import numpy as np
from numba import njit

from . import agents as ag
from ._rng import make_keys, uniform
from .agents import (
    CommonAgentParams, FundamentalParams, InstitutionalParams, MarketMakerParams,
    MomentumParams, NoiseParams, SpikingParams,
)
from .book import (
    A_FILLED, A_HEAD, META, N_LEVELS, O_ANEXT, O_ID, T_PRICE, T_VOL, TRADE_FIELDS,
    BUY, SELL, N_FREE, N_RESTING, N_TRADES, NEXT_ID, BEST_BID, BEST_ASK, DISCARDED,
    book_cancel, book_cancel_agent, book_depth, book_limit, book_market,
    grow_book_arrays, new_book_arrays,
)

log = logging.getLogger(__name__)

AGENT_TYPES = ("FT", "LMT", "SMT", "NT", "MM", "INS", "ST")
FT, LMT, SMT, NT, MM, INS, ST = range(7)

# float parameter slots
(F_TICK, F_KAPPA1, F_KAPPA2, F_ALPHA_L, F_BETA_L, F_ALPHA_S, F_BETA_S, F_GAMMA,
 F_THETA_NT, F_RHO, F_DELTA, F_MU_ELL, F_SIGMA_ELL, F_THETA_MM, F_DELTA_MM,
 F_EDGE_MAX, F_INS_RATE, F_MU_SPIKE, F_INITIAL_PRICE) = range(19)
_NF = 19

# integer parameter slots
(I_N_FT, I_FT_INTERVAL, I_VOLUME, I_INV_LIMIT, I_INV_SAFE, I_REST, I_INS_INTERVAL,
 I_INS_START, I_N_SPIKE, I_V_SPIKE, I_WARMUP, I_DEPTH_LEVELS, I_STEPS_PER_SEC,
 I_MINUTE_STEPS, I_SHUFFLE, I_N_NT, I_N_LMT, I_N_SMT) = range(18)
_NI = 18

# scalar state slots
(S_LAST_MID, S_MOM_L, S_MOM_S, S_MOM_REF) = range(4)
(K_INS_Q, K_INS_FIRST, K_INS_DONE, K_RING_SUM) = range(4)


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass
class FundamentalSource:
    """Where the exogenous fundamental value comes from.

    ``synthetic`` draws a drifting random walk (per second) with a fixed seed,
    so every Monte Carlo run of a scenario sees the same fundamental path;
    ``csv`` reads per-second prices and optionally passes them through the
    Kalman smoother first.  ``knots`` is an optional list of ``[clock,
    fraction]`` pairs; the piecewise-linear offset through them (as a
    fraction of ``start_price``) is added on top of the synthetic path.
    """

    source: str = "synthetic"
    start_price: float = 1160.0
    drift: float = 0.0
    drift_until: str = "17:00"
    volatility: float = 0.02
    seed: int = 20100506
    path: Optional[str] = None
    smooth: bool = True
    knots: Optional[list] = None

    def validate(self):
        if self.source not in ("synthetic", "csv", "array"):
            raise ConfigError(f"fundamental.source must be synthetic|csv|array, got {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ConfigError("fundamental.path is required for source: csv")
        if self.start_price <= 0:
            raise ConfigError("fundamental.start_price must be > 0")
        if self.volatility < 0:
            raise ConfigError("fundamental.volatility must be >= 0")
        if self.knots is not None:
            try:
                secs = [ag._clock_seconds(k) for k, _ in self.knots]
                [float(v) for _, v in self.knots]
            except (TypeError, ValueError) as exc:
                raise ConfigError("fundamental.knots must be a list of [HH:MM[:SS], fraction]") from exc
            if len(secs) < 2 or any(b <= a for a, b in zip(secs, secs[1:])):
                raise ConfigError("fundamental.knots needs >= 2 points in increasing time order")


@dataclass
class SimConfig:
    seed: int = 0
    total_steps: int = 324_000
    step_ms: int = 100
    session_start: str = "08:00"
    warmup_steps: int = 3000
    tick_size: float = 0.25
    depth_levels: int = 10
    shuffle_agents: bool = False
    initial_price: Optional[float] = None
    orders: CommonAgentParams = field(default_factory=CommonAgentParams)
    fundamental_traders: FundamentalParams = field(default_factory=FundamentalParams)
    long_momentum: MomentumParams = field(default_factory=lambda: MomentumParams(alpha=0.001, beta=0.3017))
    short_momentum: MomentumParams = field(default_factory=lambda: MomentumParams(alpha=0.9, beta=0.1273))
    noise_traders: NoiseParams = field(default_factory=NoiseParams)
    market_makers: MarketMakerParams = field(default_factory=MarketMakerParams)
    institutional: InstitutionalParams = field(default_factory=lambda: InstitutionalParams(enabled=False))
    spiking: SpikingParams = field(default_factory=SpikingParams)
    fundamental: FundamentalSource = field(default_factory=FundamentalSource)
    fundamental_series: Optional[np.ndarray] = field(default=None, repr=False)
    ft_phases: Optional[list] = None

    @property
    def steps_per_second(self):
        return 1000 // self.step_ms

    def validate(self):
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.step_ms <= 0 or 1000 % self.step_ms:
            raise ConfigError("step_ms must divide 1000")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        if self.tick_size <= 0:
            raise ConfigError("tick_size must be > 0")
        if not 0 <= self.seed < 2 ** 63:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        try:
            self.orders.validate()
            self.fundamental_traders.validate()
            self.long_momentum.validate("long_momentum")
            self.short_momentum.validate("short_momentum")
            self.noise_traders.validate()
            self.market_makers.validate()
            self.institutional.validate()
            self.spiking.validate()
            self.fundamental.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.ft_phases is not None and len(self.ft_phases) != self.fundamental_traders.n_ft:
            raise ConfigError("ft_phases must list one phase per fundamental trader")
        if self.fundamental_series is not None:
            fs = np.asarray(self.fundamental_series, dtype=float)
            if fs.ndim != 1 or len(fs) < self.total_steps:
                raise ConfigError("fundamental_series length must be >= total_steps")
            if not np.all(np.isfinite(fs)):
                raise ConfigError("fundamental_series must be finite")

    def census(self):
        ins = 1 if self.institutional.enabled else 0
        return {
            "FT": self.fundamental_traders.n_ft, "LMT": self.long_momentum.n_traders,
            "SMT": self.short_momentum.n_traders, "NT": self.noise_traders.n_nt,
            "MM": self.market_makers.n_mm, "INS": ins, "ST": self.spiking.n_st,
        }


def step_time(step, config: SimConfig = None):
    """Wall-clock time of ``step`` (midnight of an arbitrary trading day)."""
    config = config or SimConfig()
    if step < 0 or step >= config.total_steps:
        raise ValueError(f"step {step} outside [0, {config.total_steps})")
    start = datetime.strptime(config.session_start, "%H:%M")
    return start + timedelta(milliseconds=step * config.step_ms)


def clock_to_step(hhmm, config: SimConfig):
    """First step at or after wall-clock ``hhmm``."""
    secs = ag._clock_seconds(hhmm) - ag._clock_seconds(config.session_start)
    return secs * config.steps_per_second


@dataclass
class SimRecord:
    """Everything a run produced; arrays are indexed by step."""

    config: SimConfig
    mid: np.ndarray
    best_bid: np.ndarray  # ticks, -1 when the side is empty
    best_ask: np.ndarray
    bid_depth: np.ndarray
    ask_depth: np.ndarray
    volume: np.ndarray
    last_minute_volume: np.ndarray
    inventory: np.ndarray  # (steps, 7) signed contracts per agent type
    trades: dict
    agent_type: np.ndarray
    final_positions: np.ndarray
    discarded_volume: int
    n_orders: int
    ins_first_step: int
    ins_done_step: int
    initial_price: float = np.nan
    fundamental: np.ndarray = field(default=None, repr=False)

    @property
    def n_steps(self):
        return len(self.mid)

    def mid_filled(self):
        """Mid-price with gaps carried forward from the last valid value."""
        m = self.mid.copy()
        if np.isnan(m[0]):
            m[0] = self.initial_price
        idx = np.where(np.isnan(m), 0, np.arange(len(m)))
        np.maximum.accumulate(idx, out=idx)
        return m[idx]


# --------------------------------------------------------------------------
# compiled loop

SimState = namedtuple("SimState", [
    "keys", "ctr", "agent_type", "ft_phase", "mm_flag", "mm_restart", "st_rem", "st_dir",
    "fstate", "istate", "ring", "order",
    "r_mid", "r_bid", "r_ask", "r_bdep", "r_adep", "r_vol", "r_lastmin", "r_inv",
])


@njit(cache=True)
def _live_mid(b, last, tick):
    # mid when both sides quote, else ``last``
    bb = b.m[META, BEST_BID]
    ba = b.m[META, BEST_ASK]
    if bb >= 0 and ba >= 0:
        return 0.5 * (bb + ba) * tick
    return last


@njit(cache=True)
def _sweep(b, keys, ctr, agent, delta):
    m = b.m
    s = m[A_HEAD, agent]
    while s >= 0:
        nxt = m[O_ANEXT, s]
        if uniform(keys, ctr, agent) < delta:
            book_cancel(b, s, m[O_ID, s])
        s = nxt


@njit(cache=True)
def _n_orders(b, agent, cap):
    n = 0
    s = b.m[A_HEAD, agent]
    while s >= 0 and n < cap:
        n += 1
        s = b.m[O_ANEXT, s]
    return n


@njit(cache=True)
def _limit(b, agent, side, mid, dist, tick, vol, t):
    lvl = ag.limit_price_ticks(mid, dist, side, tick)
    if lvl < 1:
        lvl = 1
    elif lvl >= b.m[META, N_LEVELS]:
        lvl = b.m[META, N_LEVELS] - 1
    book_limit(b, agent, side, lvl, vol, t)


@njit(cache=True)
def _run_steps(b, st, fp, ip, fund, t0, t1):
    A = st.agent_type.shape[0]
    tick = fp[F_TICK]
    vol_v = ip[I_VOLUME]
    minute = ip[I_MINUTE_STEPS]
    theta_nt = fp[F_THETA_NT]
    mu_nt = ag.clamp01(theta_nt * fp[F_RHO])
    margin = 4 * A + 16
    for t in range(t0, t1):
        if b.m[META, N_FREE] < margin:
            return t
        if b.t.shape[1] - b.m[META, N_TRADES] < b.m[META, N_RESTING] + margin:
            return t

        if t > 0 and not np.isnan(st.r_mid[t - 1]):
            dp = st.r_mid[t - 1] - st.fstate[S_MOM_REF]
            st.fstate[S_MOM_REF] = st.r_mid[t - 1]
            st.fstate[S_MOM_L] = ag.momentum_update(st.fstate[S_MOM_L], fp[F_ALPHA_L], dp)
            st.fstate[S_MOM_S] = ag.momentum_update(st.fstate[S_MOM_S], fp[F_ALPHA_S], dp)
        m_l = st.fstate[S_MOM_L]
        m_s = st.fstate[S_MOM_S]
        th_l = ag.momentum_theta(fp[F_BETA_L], fp[F_GAMMA], m_l, max(ip[I_N_LMT], 1))
        th_s = ag.momentum_theta(fp[F_BETA_S], fp[F_GAMMA], m_s, max(ip[I_N_SMT], 1))
        value = fund[t]
        warm = t < ip[I_WARMUP]
        lastmin = st.istate[K_RING_SUM]
        traded0 = b.m[META, N_TRADES]

        if ip[I_SHUFFLE] == 1:
            for k in range(A - 1, 0, -1):
                j = int(uniform(st.keys, st.ctr, A) * (k + 1))
                tmp = st.order[k]
                st.order[k] = st.order[j]
                st.order[j] = tmp

        for k in range(A):
            i = st.order[k]
            typ = st.agent_type[i]
            mid = _live_mid(b, st.fstate[S_LAST_MID], tick)
            st.fstate[S_LAST_MID] = mid
            if typ == FT:
                if warm:
                    continue
                side = ag.fundamental_rule(st.keys, st.ctr, i, fp[F_KAPPA1], fp[F_KAPPA2],
                                           ip[I_N_FT], ip[I_FT_INTERVAL], st.ft_phase[i],
                                           value, mid, t)
                if side >= 0:
                    book_market(b, i, side, vol_v, t)
            elif typ == LMT or typ == SMT:
                if warm:
                    continue
                _sweep(b, st.keys, st.ctr, i, fp[F_DELTA])
                m = m_l if typ == LMT else m_s
                th = th_l if typ == LMT else th_s
                lim, mkt = ag.directional_rule(st.keys, st.ctr, i, th, ag.clamp01(th * fp[F_RHO]), m)
                if lim >= 0:
                    d = ag.lognormal_distance(st.keys, st.ctr, i, fp[F_MU_ELL], fp[F_SIGMA_ELL])
                    _limit(b, i, lim, mid, d, tick, vol_v, t)
                if mkt >= 0:
                    book_market(b, i, mkt, vol_v, t)
            elif typ == NT:
                _sweep(b, st.keys, st.ctr, i, fp[F_DELTA])
                lim, mkt = ag.noise_rule(st.keys, st.ctr, i, theta_nt, mu_nt)
                if lim >= 0:
                    d = ag.lognormal_distance(st.keys, st.ctr, i, fp[F_MU_ELL], fp[F_SIGMA_ELL])
                    _limit(b, i, lim, mid, d, tick, vol_v, t)
                if mkt >= 0:
                    book_market(b, i, mkt, vol_v, t)
            elif typ == MM:
                j = i - st.ft_phase.shape[0] - ip[I_N_LMT] - ip[I_N_SMT] - ip[I_N_NT]
                pos = b.m[A_FILLED, i]
                action, flag, restart = ag.market_maker_rule(
                    st.keys, st.ctr, i, pos, st.mm_flag[j], st.mm_restart[j], t,
                    fp[F_THETA_MM], fp[F_DELTA_MM], ip[I_INV_LIMIT], ip[I_INV_SAFE], ip[I_REST])
                st.mm_flag[j] = flag
                st.mm_restart[j] = restart
                if action == ag.MM_UNWIND:
                    book_cancel_agent(b, i)
                    book_market(b, i, BUY if pos < 0 else SELL, vol_v, t)
                elif action == ag.MM_CANCEL:
                    book_cancel_agent(b, i)
                elif action == ag.MM_CANCEL_QUOTE or (action == ag.MM_QUOTE and _n_orders(b, i, 2) < 2):
                    book_cancel_agent(b, i)
                    mid = _live_mid(b, mid, tick)
                    e = uniform(st.keys, st.ctr, i) * fp[F_EDGE_MAX]
                    _limit(b, i, BUY, mid, e, tick, vol_v, t)
                    e = uniform(st.keys, st.ctr, i) * fp[F_EDGE_MAX]
                    _limit(b, i, SELL, mid, e, tick, vol_v, t)
            elif typ == INS:
                q = st.istate[K_INS_Q]
                if t > ip[I_INS_START] and q > 0 and t % ip[I_INS_INTERVAL] == 0:
                    v = ag.institutional_volume(lastmin, fp[F_INS_RATE],
                                                ip[I_INS_INTERVAL] // ip[I_STEPS_PER_SEC], q)
                    book_market(b, i, SELL, v, t)
                    if st.istate[K_INS_FIRST] < 0:
                        st.istate[K_INS_FIRST] = t
                    st.istate[K_INS_Q] = q - v
                    if q - v <= 0:
                        st.istate[K_INS_DONE] = t
            elif typ == ST:
                if warm:
                    continue
                j = i - (A - st.st_rem.shape[0])
                side, rem, dirn = ag.spiking_rule(st.keys, st.ctr, i, st.st_rem[j], st.st_dir[j],
                                                  fp[F_MU_SPIKE], ip[I_N_SPIKE])
                st.st_rem[j] = rem
                st.st_dir[j] = dirn
                if side >= 0:
                    book_market(b, i, side, ip[I_V_SPIKE], t)

        vol = 0
        for k in range(traded0, b.m[META, N_TRADES]):
            vol += b.t[T_VOL, k]
        slot = t % minute
        st.istate[K_RING_SUM] += vol - st.ring[slot]
        st.ring[slot] = vol

        bb = b.m[META, BEST_BID]
        ba = b.m[META, BEST_ASK]
        st.r_bid[t] = bb
        st.r_ask[t] = ba
        if bb >= 0 and ba >= 0:
            mnew = 0.5 * (bb + ba) * tick
            st.r_mid[t] = mnew
            st.fstate[S_LAST_MID] = mnew
        else:
            st.r_mid[t] = np.nan
        st.r_bdep[t] = book_depth(b, BUY, ip[I_DEPTH_LEVELS])
        st.r_adep[t] = book_depth(b, SELL, ip[I_DEPTH_LEVELS])
        st.r_vol[t] = vol
        st.r_lastmin[t] = lastmin
        for k in range(st.r_inv.shape[1]):
            st.r_inv[t, k] = 0
        for i in range(A):
            st.r_inv[t, st.agent_type[i]] += b.m[A_FILLED, i]
    return t1


# --------------------------------------------------------------------------
# Python driver


def _pack_params(cfg: SimConfig, initial_price):
    fp = np.zeros(_NF)
    ip = np.zeros(_NI, dtype=np.int64)
    o, f, mm = cfg.orders, cfg.fundamental_traders, cfg.market_makers
    sps = cfg.steps_per_second
    fp[F_TICK] = cfg.tick_size
    fp[F_KAPPA1], fp[F_KAPPA2] = f.kappa1, f.kappa2
    fp[F_ALPHA_L], fp[F_BETA_L] = cfg.long_momentum.alpha, cfg.long_momentum.beta
    fp[F_ALPHA_S], fp[F_BETA_S] = cfg.short_momentum.alpha, cfg.short_momentum.beta
    fp[F_GAMMA] = cfg.orders.gamma
    nt = cfg.noise_traders
    fp[F_THETA_NT] = ag.clamp01(nt.sigma_nt / nt.n_nt) if nt.n_nt else 0.0
    fp[F_RHO], fp[F_DELTA] = o.rho, o.delta
    fp[F_MU_ELL], fp[F_SIGMA_ELL] = o.mu_ell, o.sigma_ell
    fp[F_THETA_MM], fp[F_DELTA_MM], fp[F_EDGE_MAX] = mm.theta_mm, mm.delta_mm, mm.edge_max
    fp[F_INS_RATE] = cfg.institutional.rate
    fp[F_MU_SPIKE] = cfg.spiking.mu_spike
    fp[F_INITIAL_PRICE] = initial_price
    ip[I_N_FT] = max(f.n_ft, 1)
    ip[I_FT_INTERVAL] = f.interval_steps
    ip[I_VOLUME] = o.order_volume
    ip[I_INV_LIMIT], ip[I_INV_SAFE], ip[I_REST] = mm.inv_limit, mm.inv_safe, mm.rest_steps
    ip[I_INS_INTERVAL] = cfg.institutional.interval_seconds * sps
    ip[I_INS_START] = clock_to_step(cfg.institutional.start_time, cfg)
    ip[I_N_SPIKE], ip[I_V_SPIKE] = cfg.spiking.n_spike, cfg.spiking.v_spike
    ip[I_WARMUP] = cfg.warmup_steps
    ip[I_DEPTH_LEVELS] = cfg.depth_levels
    ip[I_STEPS_PER_SEC] = sps
    ip[I_MINUTE_STEPS] = 60 * sps
    ip[I_SHUFFLE] = int(cfg.shuffle_agents)
    ip[I_N_NT] = nt.n_nt
    ip[I_N_LMT] = cfg.long_momentum.n_traders
    ip[I_N_SMT] = cfg.short_momentum.n_traders
    return fp, ip


def resolve_fundamental(cfg: SimConfig):
    """Per-step fundamental value for ``cfg`` (length ``total_steps``)."""
    if cfg.fundamental_series is not None:
        return np.ascontiguousarray(cfg.fundamental_series[: cfg.total_steps], dtype=np.float64)
    from .signal import expand_to_steps, kalman_smooth, synthetic_fundamental

    src = cfg.fundamental
    n_sec = -(-cfg.total_steps // cfg.steps_per_second)
    if src.source == "csv":
        from .io import ingest_price_csv

        per_sec = ingest_price_csv(src.path)
        if src.smooth:
            per_sec = kalman_smooth(per_sec)
        if len(per_sec) < n_sec:
            raise ConfigError(f"fundamental csv covers {len(per_sec)} s, need {n_sec}")
    elif src.source == "synthetic":
        drift_secs = ag._clock_seconds(src.drift_until) - ag._clock_seconds(cfg.session_start)
        per_sec = synthetic_fundamental(n_sec, src.start_price, src.drift, drift_secs,
                                        src.volatility, src.seed)
        if src.knots:
            t0 = ag._clock_seconds(cfg.session_start)
            xs = [ag._clock_seconds(k) - t0 for k, _ in src.knots]
            ys = [float(v) for _, v in src.knots]
            per_sec = per_sec + np.interp(np.arange(n_sec), xs, ys) * src.start_price
    else:
        raise ConfigError("fundamental.source 'array' needs fundamental_series")
    return expand_to_steps(per_sec, cfg.steps_per_second)[: cfg.total_steps]


def run(config: SimConfig) -> SimRecord:
    """Simulate one session; identical config and seed give identical records."""
    config.validate()
    fund = resolve_fundamental(config)
    initial = float(fund[0]) if config.initial_price is None else float(config.initial_price)
    census = config.census()
    agent_type = np.concatenate([np.full(census[k], j, dtype=np.int64)
                                 for j, k in enumerate(AGENT_TYPES)])
    A = len(agent_type)
    T = config.total_steps
    fp, ip = _pack_params(config, initial)
    n_levels = int(np.ceil(3.0 * initial / config.tick_size)) + 1

    b = new_book_arrays(n_levels, max(A, 1), capacity=4096 + 64 * A, trade_capacity=1 << 16)
    phases = config.ft_phases or [config.fundamental_traders.phase] * census["FT"]
    nst = census["ST"]
    st = SimState(
        keys=make_keys(config.seed, A + 1),
        ctr=np.zeros(A + 1, dtype=np.int64),
        agent_type=agent_type,
        ft_phase=np.asarray(phases, dtype=np.int64).reshape(-1),
        mm_flag=np.zeros(census["MM"], dtype=np.int64),
        mm_restart=np.zeros(census["MM"], dtype=np.int64),
        st_rem=np.zeros(nst, dtype=np.int64),
        st_dir=np.full(nst, SELL, dtype=np.int64),
        fstate=np.array([initial, 0.0, 0.0, initial]),
        istate=np.array([config.institutional.inventory if census["INS"] else 0, -1, -1, 0],
                        dtype=np.int64),
        ring=np.zeros(60 * config.steps_per_second, dtype=np.int64),
        order=np.arange(A, dtype=np.int64),
        r_mid=np.full(T, np.nan),
        r_bid=np.full(T, -1, dtype=np.int64),
        r_ask=np.full(T, -1, dtype=np.int64),
        r_bdep=np.zeros(T, dtype=np.int64),
        r_adep=np.zeros(T, dtype=np.int64),
        r_vol=np.zeros(T, dtype=np.int64),
        r_lastmin=np.zeros(T, dtype=np.int64),
        r_inv=np.zeros((T, len(AGENT_TYPES)), dtype=np.int64),
    )
    t = 0
    while t < T:
        t = _run_steps(b, st, fp, ip, fund, t, T)
        if t < T:
            margin = 4 * A + 16
            resting = int(b.m[META, N_RESTING])
            b = grow_book_arrays(
                b,
                capacity=2 * b.m.shape[1] if b.m[META, N_FREE] < margin else None,
                trade_capacity=2 * b.t.shape[1] + resting + margin,
            )
            log.debug("grew buffers at step %d", t)

    nt = int(b.m[META, N_TRADES])
    trades = {k: b.t[j, :nt].copy() for j, k in enumerate(TRADE_FIELDS)}
    trades["price"] = trades["price"] * config.tick_size
    return SimRecord(
        config=config,
        mid=st.r_mid, best_bid=st.r_bid, best_ask=st.r_ask,
        bid_depth=st.r_bdep, ask_depth=st.r_adep, volume=st.r_vol,
        last_minute_volume=st.r_lastmin, inventory=st.r_inv,
        trades=trades, agent_type=agent_type,
        final_positions=b.m[A_FILLED, :A].copy(),
        discarded_volume=int(b.m[META, DISCARDED]),
        n_orders=int(b.m[META, NEXT_ID] - 1),
        ins_first_step=int(st.istate[K_INS_FIRST]),
        ins_done_step=int(st.istate[K_INS_DONE]),
        initial_price=initial,
        fundamental=fund,
    )
