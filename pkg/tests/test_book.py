import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flashsim.book import Order, OrderBook, OrderValidationError
from conftest import NaiveBook, assert_same, random_stream, replay


def test_limit_rests_and_market_fills_fifo():
    b = OrderBook(tick_size=0.25, max_price=200.0)
    o1 = Order(1, "sell", "limit", 100, 100.25)
    o2 = Order(2, "sell", "limit", 50, 100.25)
    b.submit_limit(o1)
    b.submit_limit(o2)
    tr = b.submit_market(Order(3, "buy", "market", 120))
    assert [(t.maker_order_id, t.volume, t.price) for t in tr] == [(o1.id, 100, 100.25), (o2.id, 20, 100.25)]
    assert b.levels("sell") == [(100.25, [30])]
    assert b.filled[3] == 120 and b.filled[1] == -100 and b.filled[2] == -20


def test_crossing_limit_walks_book_then_rests():
    b = OrderBook(tick_size=0.25, max_price=200.0)
    b.submit_limit(Order(1, "sell", "limit", 10, 100.0))
    b.submit_limit(Order(1, "sell", "limit", 10, 100.5))
    tr = b.submit_limit(Order(2, "buy", "limit", 30, 100.25))
    assert [(t.price, t.volume) for t in tr] == [(100.0, 10)]
    assert b.levels("buy") == [(100.25, [20])]
    snap = b.snapshot()
    assert snap.best_bid == 100.25 and snap.best_ask == 100.5
    assert snap.mid_price == pytest.approx(100.375)


def test_market_order_on_empty_side_is_discarded():
    b = OrderBook(tick_size=0.25, max_price=200.0)
    b.submit_limit(Order(1, "buy", "limit", 5, 99.0))
    tr = b.submit_market(Order(2, "sell", "market", 8))
    assert sum(t.volume for t in tr) == 5
    assert b.discarded_volume == 3
    assert b.snapshot().best_bid is None


def test_cancel_semantics():
    b = OrderBook(tick_size=0.25, max_price=200.0)
    o = Order(1, "buy", "limit", 5, 99.0)
    b.submit_limit(o)
    assert b.resting_volume(o.id) == 5
    assert b.cancel(o.id)
    assert not b.cancel(o.id)
    assert b.levels("buy") == []


@pytest.mark.parametrize("order", [
    Order(1, "buy", "limit", 5, 99.1),
    Order(1, "buy", "limit", 0, 99.0),
    Order(1, "hold", "limit", 5, 99.0),
    Order(1, "buy", "limit", 5, 500.0),
    Order(1, "buy", "limit", 5, None),
])
def test_invalid_orders_rejected(order):
    with pytest.raises(OrderValidationError):
        OrderBook(tick_size=0.25, max_price=200.0).submit(order)


def test_grows_past_initial_capacity():
    b = OrderBook(tick_size=0.25, max_price=200.0, n_agents=2)
    for k in range(6000):
        b.submit_limit(Order(k % 300, "buy", "limit", 1, 50.0 + 0.25 * (k % 40)))
    assert sum(sum(v) for _, v in b.levels("buy")) == 6000
    tr = b.submit_market(Order(301, "sell", "market", 6000))
    assert sum(t.volume for t in tr) == 6000
    assert b.filled.sum() == 0


def test_random_streams_match_reference():
    # 1000 streams of up to 200 orders against the list-based matcher
    rng = np.random.default_rng(7)
    for _ in range(1000):
        stream = random_stream(rng, int(rng.integers(1, 201)))
        assert_same(*replay(stream))


op = st.one_of(
    st.tuples(st.just("limit"), st.integers(0, 5), st.sampled_from(["buy", "sell"]),
              st.integers(380, 420).map(lambda k: k * 0.25), st.integers(1, 300)),
    st.tuples(st.just("market"), st.integers(0, 5), st.sampled_from(["buy", "sell"]),
              st.integers(1, 600)),
    st.tuples(st.just("cancel"), st.integers(0, 1000)),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(op, max_size=200))
def test_matching_properties(stream):
    fast, ref, trades = replay(stream)
    assert_same(fast, ref, trades)
    # conservation: fills net to zero, book never crossed
    assert fast.filled.sum() == 0
    s = fast.snapshot()
    if s.best_bid is not None and s.best_ask is not None:
        assert s.best_bid < s.best_ask
