from __future__ import annotations

import random
import threading

import pytest

from reactordb.errors import ContractViolation
from reactordb.storage import Record, Table, stable_read


def loaded(n: int, cap: int = 8) -> Table:
    t = Table("t", leaf_capacity=cap)
    t.bulk_load((k, f"v{k}") for k in range(0, 2 * n, 2))
    return t


def test_point_read_present_and_absent():
    t = loaded(10)
    value, word = t.get(4)
    assert value == "v4" and word.version == 1 and not word.locked
    value, node = t.get(5)
    leaf, v = node
    assert value is None and leaf.covers(5) and v == leaf.version


def test_scan_forward_reverse_and_limit():
    t = loaded(50)
    res = t.scan(10, 30)
    assert [k for k, _, _ in res.records] == list(range(10, 31, 2))
    rev = t.scan(10, 30, limit=3, reverse=True)
    assert [k for k, _, _ in rev.records] == [30, 28, 26]
    assert t.scan(1000, 2000).records == []
    with pytest.raises(ValueError):
        t.scan(5, 1)


def test_scan_node_set_covers_range():
    t = loaded(100, cap=8)
    res = t.scan(20, 120)
    leaves = [leaf for leaf, _ in res.node_set]
    assert leaves[0].covers(20)
    assert leaves[-1].covers(120)
    for a, b in zip(leaves, leaves[1:]):
        assert a.high == b.low


def test_insert_bumps_leaf_version_and_splits():
    t = loaded(4, cap=4)
    res = t.scan(0, 100)
    owner = object()
    for k in (1, 3, 5, 7, 9):
        assert t.reserve_insert(k, owner)
        t.install(k, "new", commit_tid=9, owner=owner)
    assert [k for k, _ in t.items()] == sorted([0, 2, 4, 6, 1, 3, 5, 7, 9])
    assert len(t.leaves()) > 1
    assert not all(t.node_unchanged(leaf, v) for leaf, v in res.node_set)
    for leaf in t.leaves():
        assert len(leaf.keys) <= 4
        assert all(leaf.covers(k) for k in leaf.keys)


def test_update_install_bumps_record_version():
    t = loaded(3)
    me = object()
    assert t.lock_record(2, me)
    assert not t.lock_record(2, object())
    assert t.lock_record(2, me)  # re-entrant for the holder
    t.install(2, "x", commit_tid=7, owner=me)
    value, word = t.get(2)
    assert value == "x" and word.version == 2 and word.committer_tid == 7 and not word.locked


def test_misuse_is_a_contract_violation():
    t = loaded(3)
    with pytest.raises(ContractViolation):
        t.unlock_record(0, object())
    with pytest.raises(ContractViolation):
        t.lock_record(99, object())
    with pytest.raises(ContractViolation):
        t.install(99, "x", 1, object())
    with pytest.raises(ContractViolation):
        t.bulk_load([(1, 1)])


def test_pending_insert_invalidates_other_observers():
    t = loaded(10)
    _, (leaf, v) = t.get(3)
    a, b = object(), object()
    assert t.reserve_insert(3, a)
    assert not t.reserve_insert(3, b)
    assert t.node_unchanged(leaf, v, owner=a)
    assert not t.node_unchanged(leaf, v, owner=b)
    t.release_insert(3, a)
    assert t.node_unchanged(leaf, v, owner=b)


def test_stable_read_never_returns_torn_value():
    rec = Record((0, 0))
    stop = threading.Event()

    def writer():
        i = 0
        while not stop.is_set():
            i += 1
            rec.word |= 1
            rec.value = (i, i)
            rec.word = ((rec.word >> 1) + 1) << 1

    th = threading.Thread(target=writer)
    th.start()
    try:
        for _ in range(20000):
            (a, b), w, _ = stable_read(rec)
            assert a == b and not w & 1
    finally:
        stop.set()
        th.join()


def test_concurrent_inserts_keep_order_and_coverage():
    t = Table("c", leaf_capacity=6)
    t.bulk_load([])
    keys = list(range(600))
    random.Random(3).shuffle(keys)

    def inserter(chunk):
        me = object()
        for k in chunk:
            assert t.reserve_insert(k, me)
            t.install(k, k, 1, me)

    ths = [threading.Thread(target=inserter, args=(keys[i::4],)) for i in range(4)]
    for th in ths:
        th.start()
    for th in ths:
        th.join()
    assert [k for k, _ in t.items()] == list(range(600))
    assert len(t.scan(100, 199).records) == 100
    assert [k for k, _, _ in t.scan(0, 599, limit=5, reverse=True).records] == [599, 598, 597, 596, 595]
