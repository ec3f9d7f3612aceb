import numpy as np
import pytest

from flashsim.book import Order, OrderBook


class NaiveBook:
    """Reference matcher: plain lists, price then arrival priority."""

    def __init__(self):
        self.resting = []  # [id, agent, side, price, volume, seq]
        self.seq = 0
        self.next_id = 1
        self.trades = []
        self.filled = {}
        self.discarded = 0

    def _fill(self, agent, sign, vol):
        self.filled[agent] = self.filled.get(agent, 0) + sign * vol

    def _match(self, oid, agent, side, limit, vol, step):
        opp = "sell" if side == "buy" else "buy"
        while vol > 0:
            cands = [o for o in self.resting if o[2] == opp]
            if side == "buy":
                cands = [o for o in cands if limit is None or o[3] <= limit]
                cands.sort(key=lambda o: (o[3], o[5]))
            else:
                cands = [o for o in cands if limit is None or o[3] >= limit]
                cands.sort(key=lambda o: (-o[3], o[5]))
            if not cands:
                break
            best = cands[0]
            q = min(vol, best[4])
            self.trades.append((step, best[3], q, best[0], oid, best[1], agent))
            sgn = 1 if side == "buy" else -1
            self._fill(agent, sgn, q)
            self._fill(best[1], -sgn, q)
            best[4] -= q
            vol -= q
            if best[4] == 0:
                self.resting.remove(best)
        return vol

    def limit(self, agent, side, price, vol, step=0):
        oid = self.next_id
        self.next_id += 1
        left = self._match(oid, agent, side, price, vol, step)
        if left > 0:
            self.seq += 1
            self.resting.append([oid, agent, side, price, left, self.seq])
        return oid

    def market(self, agent, side, vol, step=0):
        oid = self.next_id
        self.next_id += 1
        self.discarded += self._match(oid, agent, side, None, vol, step)
        return oid

    def cancel(self, oid):
        for o in self.resting:
            if o[0] == oid:
                self.resting.remove(o)
                return True
        return False

    def levels(self, side):
        px = sorted({o[3] for o in self.resting if o[2] == side}, reverse=(side == "buy"))
        return [(p, [o[4] for o in sorted(self.resting, key=lambda o: o[5])
                     if o[2] == side and o[3] == p]) for p in px]


def replay(stream, tick=0.25):
    """Feed an order stream to both books; return (fast book, naive book, fast trades)."""
    fast = OrderBook(tick_size=tick, max_price=200.0, n_agents=8)
    ref = NaiveBook()
    ids = []
    trades = []
    for step, op in enumerate(stream):
        kind = op[0]
        if kind == "limit":
            _, agent, side, price, vol = op
            o = Order(agent, side, "limit", vol, price, submit_step=step)
            trades += fast.submit_limit(o)
            rid = ref.limit(agent, side, price, vol, step)
            assert o.id == rid
            ids.append(rid)
        elif kind == "market":
            _, agent, side, vol = op
            o = Order(agent, side, "market", vol, submit_step=step)
            trades += fast.submit_market(o)
            assert o.id == ref.market(agent, side, vol, step)
        else:
            if ids:
                oid = ids[op[1] % len(ids)]
                assert fast.cancel(oid) == ref.cancel(oid)
    return fast, ref, trades


def random_stream(rng, n):
    out = []
    for _ in range(n):
        u = rng.random()
        agent = int(rng.integers(0, 6))
        side = "buy" if rng.random() < 0.5 else "sell"
        if u < 0.6:
            centre = 100.0 + (-1.0 if side == "buy" else 1.0)
            price = round((centre + rng.normal(0, 1.5)) * 4) / 4
            out.append(("limit", agent, side, float(min(max(price, 0.25), 199.75)),
                        int(rng.integers(1, 400))))
        elif u < 0.85:
            out.append(("market", agent, side, int(rng.integers(1, 500))))
        else:
            out.append(("cancel", int(rng.integers(0, 10 ** 6))))
    return out


def assert_same(fast, ref, trades):
    got = [(t.step, t.price, t.volume, t.maker_order_id, t.taker_order_id,
            t.maker_agent_id, t.taker_agent_id) for t in trades]
    assert got == ref.trades
    for side in ("buy", "sell"):
        assert fast.levels(side) == ref.levels(side)
    filled = fast.filled
    for a in range(len(filled)):
        assert filled[a] == ref.filled.get(a, 0)
    assert fast.discarded_volume == ref.discarded


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
