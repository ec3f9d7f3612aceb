"""Price-time priority limit order book.

The book lives in a bundle of flat numpy arrays (:class:`BookArrays`) so the
same matching code runs inside the compiled simulation loop and behind the
Python :class:`OrderBook` facade used by tests and tooling.  Prices are
integer tick indices on a fixed ladder; each price level is a doubly linked
FIFO queue of order slots, and every resting order is also linked into its
owner's list so agents can cancel their own orders in O(1).
"""
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

BUY = 0
SELL = 1

# meta slots
BEST_BID = 0
BEST_ASK = 1
FREE_HEAD = 2
NEXT_ID = 3
N_RESTING = 4
N_TRADES = 5
N_FREE = 6
DISCARDED = 7
N_LVL_BID = 8  # non-empty price levels per side
N_LVL_ASK = 9
N_LEVELS = 10
N_AGENTS = 11
_META_LEN = 12

# Rows of the packed book matrix.  Columns index price levels, order slots or
# agents depending on the row; meta scalars live in the last row.
L_HEAD, L_TAIL, L_VOL = range(3)
(O_NEXT, O_PREV, O_ANEXT, O_APREV, O_PRICE, O_VOL, O_AGENT, O_ID, O_SIDE) = range(3, 12)
A_HEAD, A_FILLED = 12, 13
META = 14
_N_ROWS = 15
(T_STEP, T_PRICE, T_VOL, T_MAKER_ID, T_TAKER_ID, T_MAKER_AGENT, T_TAKER_AGENT) = range(7)
TRADE_FIELDS = ("step", "price", "volume", "maker_order_id", "taker_order_id",
                "maker_agent_id", "taker_agent_id")

# Two arrays rather than one per field: every compiled call pays a refcount
# round trip per member, which dominated the step loop with many members.
BookArrays = namedtuple("BookArrays", ["m", "t"])


def _blank(width):
    m = np.full((_N_ROWS, width), -1, dtype=np.int64)
    m[[L_VOL, O_PRICE, O_VOL, O_ID, O_SIDE, A_FILLED, META]] = 0
    m[O_NEXT] = np.arange(1, width + 1)
    m[O_NEXT, -1] = -1
    return m


def new_book_arrays(n_levels, n_agents, capacity=4096, trade_capacity=4096):
    width = max(n_levels, n_agents, capacity, _META_LEN)
    m = _blank(width)
    meta = m[META]
    meta[BEST_BID] = -1
    meta[BEST_ASK] = -1
    meta[FREE_HEAD] = 0
    meta[N_FREE] = width
    meta[NEXT_ID] = 1
    meta[N_LEVELS] = n_levels
    meta[N_AGENTS] = n_agents
    return BookArrays(m=m, t=np.zeros((7, trade_capacity), dtype=np.int64))


def grow_book_arrays(b, capacity=None, trade_capacity=None, n_agents=None):
    """Return a copy of ``b`` with more order slots, trade rows or agents."""
    old = b.m.shape[1]
    width = max(capacity or old, n_agents or 0, old)
    trade_capacity = max(trade_capacity or b.t.shape[1], b.t.shape[1])
    if width > old:
        m = _blank(width)
        m[:, :old] = b.m
        meta = m[META]
        meta[:] = 0
        meta[:_META_LEN] = b.m[META, :_META_LEN]
        m[O_NEXT, width - 1] = meta[FREE_HEAD]
        meta[FREE_HEAD] = old
        meta[N_FREE] += width - old
        m[O_NEXT, old:width - 1] = np.arange(old + 1, width)
    else:
        m = b.m.copy()
    if n_agents:
        m[META, N_AGENTS] = max(n_agents, m[META, N_AGENTS])
    t = np.zeros((7, trade_capacity), dtype=np.int64)
    t[:, : b.t.shape[1]] = b.t
    return BookArrays(m=m, t=t)


def book_meta(b):
    return b.m[META, :_META_LEN]


def filled_volumes(b):
    return b.m[A_FILLED, : b.m[META, N_AGENTS]]


# --------------------------------------------------------------------------
# compiled primitives

@njit(cache=True)
def _unlink(b, s):
    """Detach slot ``s`` from its level queue and its owner list, then free it."""
    m = b.m
    meta = m[META]
    lvl = m[O_PRICE, s]
    p, n = m[O_PREV, s], m[O_NEXT, s]
    if p >= 0:
        m[O_NEXT, p] = n
    else:
        m[L_HEAD, lvl] = n
    if n >= 0:
        m[O_PREV, n] = p
    else:
        m[L_TAIL, lvl] = p
    m[L_VOL, lvl] -= m[O_VOL, s]

    ap, an = m[O_APREV, s], m[O_ANEXT, s]
    if ap >= 0:
        m[O_ANEXT, ap] = an
    else:
        m[A_HEAD, m[O_AGENT, s]] = an
    if an >= 0:
        m[O_APREV, an] = ap

    side = m[O_SIDE, s]
    m[O_VOL, s] = 0
    m[O_AGENT, s] = -1
    m[O_PREV, s] = -1
    m[O_ANEXT, s] = -1
    m[O_APREV, s] = -1
    m[O_NEXT, s] = meta[FREE_HEAD]
    meta[FREE_HEAD] = s
    meta[N_FREE] += 1
    meta[N_RESTING] -= 1

    if m[L_HEAD, lvl] < 0:
        n_levels = meta[N_LEVELS]
        meta[N_LVL_BID + side] -= 1
        if side == BUY and meta[BEST_BID] == lvl:
            if meta[N_LVL_BID] == 0:
                meta[BEST_BID] = -1
            else:
                l = lvl - 1
                while l >= 0 and m[L_HEAD, l] < 0:
                    l -= 1
                meta[BEST_BID] = l
        elif side == SELL and meta[BEST_ASK] == lvl:
            if meta[N_LVL_ASK] == 0:
                meta[BEST_ASK] = -1
            else:
                l = lvl + 1
                while l < n_levels and m[L_HEAD, l] < 0:
                    l += 1
                meta[BEST_ASK] = l if l < n_levels else -1


@njit(cache=True)
def _rest(b, agent, side, lvl, vol, oid):
    m = b.m
    meta = m[META]
    s = meta[FREE_HEAD]
    meta[FREE_HEAD] = m[O_NEXT, s]
    meta[N_FREE] -= 1
    meta[N_RESTING] += 1
    m[O_PRICE, s] = lvl
    m[O_VOL, s] = vol
    m[O_AGENT, s] = agent
    m[O_ID, s] = oid
    m[O_SIDE, s] = side
    tail = m[L_TAIL, lvl]
    m[O_PREV, s] = tail
    m[O_NEXT, s] = -1
    if tail >= 0:
        m[O_NEXT, tail] = s
    else:
        m[L_HEAD, lvl] = s
        meta[N_LVL_BID + side] += 1
    m[L_TAIL, lvl] = s
    m[L_VOL, lvl] += vol
    head = m[A_HEAD, agent]
    m[O_APREV, s] = -1
    m[O_ANEXT, s] = head
    if head >= 0:
        m[O_APREV, head] = s
    m[A_HEAD, agent] = s
    if side == BUY:
        if lvl > meta[BEST_BID]:
            meta[BEST_BID] = lvl
    else:
        if meta[BEST_ASK] < 0 or lvl < meta[BEST_ASK]:
            meta[BEST_ASK] = lvl
    return s


@njit(cache=True)
def _match(b, agent, side, limit, vol, oid, step):
    """Consume the opposite side; ``limit < 0`` means no price limit."""
    m = b.m
    t = b.t
    meta = m[META]
    filled = m[A_FILLED]
    while vol > 0:
        if side == BUY:
            lvl = meta[BEST_ASK]
            if lvl < 0 or (limit >= 0 and lvl > limit):
                break
        else:
            lvl = meta[BEST_BID]
            if lvl < 0 or (limit >= 0 and lvl < limit):
                break
        s = m[L_HEAD, lvl]
        fill = min(vol, m[O_VOL, s])
        maker = m[O_AGENT, s]
        k = meta[N_TRADES]
        if k < t.shape[1]:
            t[T_STEP, k] = step
            t[T_PRICE, k] = lvl
            t[T_VOL, k] = fill
            t[T_MAKER_ID, k] = m[O_ID, s]
            t[T_TAKER_ID, k] = oid
            t[T_MAKER_AGENT, k] = maker
            t[T_TAKER_AGENT, k] = agent
        meta[N_TRADES] = k + 1
        if side == BUY:
            filled[agent] += fill
            filled[maker] -= fill
        else:
            filled[agent] -= fill
            filled[maker] += fill
        vol -= fill
        if fill == m[O_VOL, s]:
            _unlink(b, s)
        else:
            m[O_VOL, s] -= fill
            m[L_VOL, lvl] -= fill
    return vol


@njit(cache=True)
def book_limit(b, agent, side, lvl, vol, step):
    """Submit a limit order at tick ``lvl``; returns (order id, slot or -1, filled)."""
    oid = b.m[META, NEXT_ID]
    b.m[META, NEXT_ID] = oid + 1
    rem = _match(b, agent, side, lvl, vol, oid, step)
    s = -1
    if rem > 0:
        s = _rest(b, agent, side, lvl, rem, oid)
    return oid, s, vol - rem


@njit(cache=True)
def book_market(b, agent, side, vol, step):
    """Fill-and-kill market order; returns (order id, filled volume)."""
    oid = b.m[META, NEXT_ID]
    b.m[META, NEXT_ID] = oid + 1
    rem = _match(b, agent, side, -1, vol, oid, step)
    b.m[META, DISCARDED] += rem
    return oid, vol - rem


@njit(cache=True)
def book_cancel(b, s, oid):
    m = b.m
    if s < 0 or s >= m.shape[1] or m[O_ID, s] != oid or m[O_VOL, s] <= 0:
        return False
    _unlink(b, s)
    return True


@njit(cache=True)
def book_cancel_agent(b, agent):
    n = 0
    s = b.m[A_HEAD, agent]
    while s >= 0:
        nxt = b.m[O_ANEXT, s]
        _unlink(b, s)
        n += 1
        s = nxt
    return n


@njit(cache=True)
def book_depth(b, side, n_levels):
    """Resting volume over the ``n_levels`` best non-empty price levels."""
    m = b.m
    tot = 0
    seen = 0
    n_levels = min(n_levels, m[META, N_LVL_BID + side])
    if side == BUY:
        l = m[META, BEST_BID]
        while l >= 0 and seen < n_levels:
            if m[L_HEAD, l] >= 0:
                tot += m[L_VOL, l]
                seen += 1
            l -= 1
    else:
        l = m[META, BEST_ASK]
        if l < 0:
            return 0
        top = m[META, N_LEVELS]
        while l < top and seen < n_levels:
            if m[L_HEAD, l] >= 0:
                tot += m[L_VOL, l]
                seen += 1
            l += 1
    return tot


# --------------------------------------------------------------------------
# Python-facing domain types


class OrderValidationError(ValueError):
    """Raised for orders the exchange refuses to accept."""


@dataclass
class Order:
    agent_id: int
    side: str  # "buy" | "sell"
    kind: str  # "limit" | "market"
    volume: int
    price: Optional[float] = None
    submit_step: int = 0
    id: Optional[int] = None


@dataclass(frozen=True)
class Trade:
    step: int
    price: float
    volume: int
    maker_order_id: int
    taker_order_id: int
    maker_agent_id: int
    taker_agent_id: int


@dataclass(frozen=True)
class BookSnapshot:
    step: int
    best_bid: Optional[float]
    best_ask: Optional[float]
    mid_price: Optional[float]
    bid_depth: int
    ask_depth: int


@dataclass
class OrderBook:
    """Single-instrument order book with price-time priority matching.

    Parameters
    ----------
    tick_size : float
        Price increment; limit prices must be exact multiples of it.
    max_price : float
        Upper end of the price ladder.
    depth_levels : int
        Number of best price levels summed into snapshot depth.
    """

    tick_size: float = 0.25
    max_price: float = 4000.0
    depth_levels: int = 10
    n_agents: int = 64
    arrays: BookArrays = field(init=False, repr=False)
    _slots: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        n_levels = int(round(self.max_price / self.tick_size)) + 1
        self.arrays = new_book_arrays(n_levels, self.n_agents)

    # -- helpers ----------------------------------------------------------
    def to_ticks(self, price):
        ticks = price / self.tick_size
        lvl = int(round(ticks))
        if abs(ticks - lvl) > 1e-9:
            raise OrderValidationError(f"price {price} is not a multiple of tick size {self.tick_size}")
        if not 0 <= lvl < self.arrays.m[META, N_LEVELS]:
            raise OrderValidationError(f"price {price} outside ladder [0, {self.max_price}]")
        return lvl

    def _reserve(self, agent_id):
        b = self.arrays
        meta = book_meta(b)
        need_agents = agent_id + 1 > meta[N_AGENTS]
        need_slots = meta[N_FREE] < 2
        need_trades = b.t.shape[1] - meta[N_TRADES] < meta[N_RESTING] + 2
        if need_agents or need_slots or need_trades:
            self.arrays = grow_book_arrays(
                b,
                capacity=2 * b.m.shape[1] if need_slots else None,
                trade_capacity=2 * b.t.shape[1] + meta[N_RESTING] if need_trades else None,
                n_agents=max(2 * meta[N_AGENTS], agent_id + 1) if need_agents else None,
            )

    def _validate(self, order, kind):
        if order.kind != kind:
            raise OrderValidationError(f"expected a {kind} order, got {order.kind}")
        if order.side not in ("buy", "sell"):
            raise OrderValidationError(f"unknown side {order.side!r}")
        if int(order.volume) != order.volume or order.volume <= 0:
            raise OrderValidationError(f"volume must be a positive integer, got {order.volume}")
        if order.agent_id < 0:
            raise OrderValidationError("agent_id must be non-negative")

    def _new_trades(self, start):
        t = self.arrays.t
        tick = self.tick_size
        return [
            Trade(
                step=int(t[T_STEP, k]), price=float(t[T_PRICE, k] * tick), volume=int(t[T_VOL, k]),
                maker_order_id=int(t[T_MAKER_ID, k]), taker_order_id=int(t[T_TAKER_ID, k]),
                maker_agent_id=int(t[T_MAKER_AGENT, k]), taker_agent_id=int(t[T_TAKER_AGENT, k]),
            )
            for k in range(start, int(book_meta(self.arrays)[N_TRADES]))
        ]

    # -- operations -------------------------------------------------------
    def submit_limit(self, order):
        self._validate(order, "limit")
        if order.price is None:
            raise OrderValidationError("limit order without a price")
        lvl = self.to_ticks(order.price)
        self._reserve(order.agent_id)
        start = int(book_meta(self.arrays)[N_TRADES])
        side = BUY if order.side == "buy" else SELL
        oid, slot, _ = book_limit(self.arrays, order.agent_id, side, lvl, int(order.volume), order.submit_step)
        order.id = int(oid)
        if slot >= 0:
            self._slots[order.id] = int(slot)
        return self._new_trades(start)

    def submit_market(self, order):
        self._validate(order, "market")
        self._reserve(order.agent_id)
        start = int(book_meta(self.arrays)[N_TRADES])
        side = BUY if order.side == "buy" else SELL
        oid, _ = book_market(self.arrays, order.agent_id, side, int(order.volume), order.submit_step)
        order.id = int(oid)
        return self._new_trades(start)

    def submit(self, order):
        if order.kind == "market":
            return self.submit_market(order)
        return self.submit_limit(order)

    def cancel(self, order_id):
        slot = self._slots.pop(order_id, None)
        if slot is None:
            return False
        return bool(book_cancel(self.arrays, slot, order_id))

    def snapshot(self, step=0):
        b = self.arrays
        bb, ba = int(b.m[META, BEST_BID]), int(b.m[META, BEST_ASK])
        tick = self.tick_size
        mid = 0.5 * (bb + ba) * tick if bb >= 0 and ba >= 0 else None
        return BookSnapshot(
            step=step,
            best_bid=float(bb * tick) if bb >= 0 else None,
            best_ask=float(ba * tick) if ba >= 0 else None,
            mid_price=mid,
            bid_depth=int(book_depth(b, BUY, self.depth_levels)),
            ask_depth=int(book_depth(b, SELL, self.depth_levels)),
        )

    # -- inspection -------------------------------------------------------
    def levels(self, side):
        """[(price, [volumes in FIFO order])] from best to worst."""
        b = self.arrays
        out = []
        heads = b.m[L_HEAD, : b.m[META, N_LEVELS]]
        lv = np.flatnonzero(heads >= 0)
        lv = [l for l in lv if b.m[O_SIDE, heads[l]] == (BUY if side == "buy" else SELL)]
        lv = sorted(lv, reverse=(side == "buy"))
        for l in lv:
            vols = []
            s = heads[l]
            while s >= 0:
                vols.append(int(b.m[O_VOL, s]))
                s = b.m[O_NEXT, s]
            out.append((float(l * self.tick_size), vols))
        return out

    def resting_volume(self, order_id):
        slot = self._slots.get(order_id)
        if slot is None or self.arrays.m[O_ID, slot] != order_id:
            return 0
        return int(self.arrays.m[O_VOL, slot])

    @property
    def filled(self):
        """Signed filled volume per agent id."""
        return filled_volumes(self.arrays).copy()

    @property
    def discarded_volume(self):
        return int(self.arrays.m[META, DISCARDED])


def submit_limit(book, order):
    return book.submit_limit(order)


def submit_market(book, order):
    return book.submit_market(order)


def cancel(book, order_id):
    return book.cancel(order_id)


def snapshot(book, step=0):
    return book.snapshot(step)
