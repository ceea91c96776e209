from __future__ import annotations

import random
import statistics

import pytest

from reactordb import Runtime, serial_deployment
from reactordb.errors import ConfigurationError
from reactordb.smartmart import (DelayLoop, InsufficientStock, LoadParams, build, check_invariants,
                                 fixed_discount, generate, predict_trend, schema, variable_discount)

SMALL = LoadParams(sections=3, items_per_section=20, history_per_item=12, carts=2,
                   group_managers=2, customers_per_cart=3, initial_stock=50, seed=5)


def oracle(window):
    return statistics.fmean(window) + statistics.pstdev(window)


@pytest.fixture
def mart() -> Runtime:
    rt = Runtime(serial_deployment())
    build(rt, SMALL)
    return rt


def test_predict_trend_fixed_cases():
    assert predict_trend([5, 5, 5, 5]) == 5.0
    assert predict_trend([0, 2]) == 2.0
    assert predict_trend([]) == 0.0
    assert predict_trend([7]) == 7.0


def test_predict_trend_matches_oracle_on_random_windows():
    rng = random.Random(11)
    for _ in range(500):
        w = [rng.randint(1, 10) for _ in range(rng.randint(1, 300))]
        assert predict_trend(w) == pytest.approx(oracle(w), rel=1e-9)


def test_discounts():
    assert fixed_discount(3, 9) == 0.02
    assert variable_discount(0.0, 5.0) == pytest.approx(0.30)
    assert variable_discount(10.0, 5.0) == 0.0
    assert variable_discount(2.5, 5.0) == pytest.approx(0.15)
    assert variable_discount(1.0, 0.0) == 0.0


def test_schema_has_five_types_and_eight_relations():
    types = schema()
    assert len(types) == 5
    assert sum(len(t.relations) for t in types) == 8


def test_load_params():
    assert LoadParams.paper().sections == 8 and LoadParams.paper().customers == 240
    d = LoadParams.desk()
    assert (d.sections, d.items_per_section, d.history_per_item, d.carts, d.group_managers,
            d.customers_per_cart) == (4, 1000, 60, 4, 4, 8)
    with pytest.raises(ConfigurationError):
        LoadParams(carts=0)


def test_desk_load_counts_and_determinism():
    rows = generate(LoadParams())
    assert sum(len(rows[(f"section_{s}", "inventory")]) for s in range(4)) == 4000
    assert sum(len(rows[(f"section_{s}", "purchase_history")]) for s in range(4)) == 240_000
    rt1, rt2 = Runtime(serial_deployment()), Runtime(serial_deployment())
    build(rt1, SMALL)
    generate.cache_clear()
    build(rt2, SMALL)
    assert rt1.snapshot() == rt2.snapshot()


def test_add_items_prices_and_discounts(mart):
    items = ((0, 3, 2), (2, 7, 1))
    res = mart.run_inline("cart_0", "add_items", 1, items, True)
    assert res.committed
    inv = {s: dict(mart.table(f"section_{s}", "inventory").items()) for s in (0, 2)}
    assert res.value == pytest.approx(2 * inv[0][3].price + inv[2][7].price)
    group = mart.table("customer_1", "profile").get(1)[0].group_id
    lines = dict(mart.table("cart_0", "cart_items").items())
    assert lines[0].n_lines == 2 and lines[0].customer_id == 1
    assert lines[1].unit_price == inv[0][3].price
    assert lines[2].fixed_discount == fixed_discount(group, 7)


def test_add_zero_items_and_empty_checkout(mart):
    assert mart.run_inline("cart_0", "add_items", 0, (), True).committed
    res = mart.run_inline("cart_0", "checkout", 5)
    assert res.committed and res.value == (0.0, ())
    assert mart.table("customer_0", "profile").get(0)[0].visit_count == 1


def test_unknown_item_aborts(mart):
    res = mart.run_inline("cart_0", "add_items", 0, ((0, 999, 1),), True)
    assert not res.committed


def test_checkout_updates_stock_history_and_visit(mart):
    before = mart.snapshot()
    items = ((0, 1, 3), (1, 1, 2), (1, 4, 5))
    mart.run_inline("cart_1", "add_items", 4, items, True)
    res = mart.run_inline("cart_1", "checkout", 5)
    assert res.committed
    total, sold = res.value
    assert sold == items
    inv1 = dict(mart.table("section_1", "inventory").items())
    assert inv1[4].stock == 45 and inv1[4].next_seq == 13
    assert mart.table("section_1", "purchase_history").get((4, 12))[0] == 5
    assert mart.table("customer_4", "visits").get(1)[0] == total
    assert mart.table("cart_1", "cart_items").get(0)[0].n_lines == 0
    assert check_invariants(SMALL, mart.snapshot(), [sold]) == []
    assert check_invariants(SMALL, before, [sold]) != []


def test_checkout_total_uses_window_prediction(mart):
    mart.run_inline("cart_0", "add_items", 0, ((2, 6, 1),), True)
    hist = [q for (i, _), q in mart.table("section_2", "purchase_history").items() if i == 6]
    line = mart.table("cart_0", "cart_items").get(1)[0]
    ref = sum(hist) / len(hist)
    var = variable_discount(oracle(hist[-4:]), ref)
    total, _ = mart.run_inline("cart_0", "checkout", 4).value
    assert total == pytest.approx(line.unit_price * (1 - (line.fixed_discount + var)))


def test_insufficient_stock_aborts_all_sections(mart):
    before = mart.snapshot()
    mart.run_inline("cart_0", "add_items", 0, ((0, 2, 1), (1, 2, 51)), True)
    res = mart.run_inline("cart_0", "checkout", 5)
    assert not res.committed and isinstance(res.error, InsufficientStock)
    after = mart.snapshot()
    for s in range(3):
        for rel in ("inventory", "purchase_history"):
            assert after[(f"section_{s}", rel)] == before[(f"section_{s}", rel)]


def test_scan_only_checkout_leaves_history_alone(mart):
    mart.run_inline("cart_0", "add_items", 0, ((0, 2, 1),), True)
    res = mart.run_inline("cart_0", "checkout", 5, 0.0, False)
    assert res.committed
    assert check_invariants(SMALL, mart.snapshot(), [res.value[1]], record_history=False) == []


def test_delay_loop_is_fixed_work():
    loop = DelayLoop()
    loop.calibrate(target_ms=5)
    assert loop.chunks_for(3.0) == loop.chunks_for(3.0) >= 1
    assert loop.spin(1.0) == loop.spin(1.0)
    assert loop.spin(0) == 0.0
