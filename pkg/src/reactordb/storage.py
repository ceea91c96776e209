"""Versioned, ordered in-memory tables.

Each table keeps its rows in a dict for point access and threads the keys
through a doubly linked list of fixed-capacity leaves.  Every leaf carries a
structural version that is bumped whenever keys enter or leave its range, so a
scan can later prove that nothing was inserted into the ranges it covered.

Records carry a packed version word (``version << 1 | lock_bit``).  Readers
never take a lock: they read the word, the payload and the word again, and
retry if the record was locked or changed in between.  Structural changes and
lock-bit transitions go through a short per-table latch.
"""

from __future__ import annotations

import bisect
import itertools
import threading
import time
from typing import Any, Iterable, NamedTuple

from .errors import ContractViolation

LEAF_CAPACITY = 64

_table_ids = itertools.count(1)
_leaf_ids = itertools.count(1)


class VersionWord(NamedTuple):
    version: int
    locked: bool
    committer_tid: int


class Record:
    __slots__ = ("word", "value", "tid", "owner")

    def __init__(self, value: Any, version: int = 1, tid: int = 0) -> None:
        self.word = version << 1
        self.value = value
        self.tid = tid
        self.owner: object | None = None

    def version_word(self) -> VersionWord:
        w = self.word
        return VersionWord(w >> 1, bool(w & 1), self.tid)


class Leaf:
    """Key range ``[low, high)``; ``None`` bounds are open."""

    __slots__ = ("id", "keys", "version", "low", "high", "next", "prev")

    def __init__(self, keys: list, low: Any = None, high: Any = None) -> None:
        self.id = next(_leaf_ids)
        self.keys = keys
        self.version = 0
        self.low = low
        self.high = high
        self.next: Leaf | None = None
        self.prev: Leaf | None = None

    def covers(self, key: Any) -> bool:
        return (self.low is None or self.low <= key) and (self.high is None or key < self.high)

    def __repr__(self) -> str:
        return f"Leaf(id={self.id}, n={len(self.keys)}, v={self.version})"


class Lookup(NamedTuple):
    """Result of a point read.

    ``record``/``word`` are set for a present key; ``node`` holds the covering
    ``(leaf, version)`` observation for an absent one.
    """

    value: Any
    word: VersionWord | None
    record: Record | None
    node: tuple[Leaf, int] | None


class ScanResult(NamedTuple):
    records: list[tuple[Any, Any, VersionWord]]
    node_set: list[tuple[Leaf, int]]


def _pause() -> None:
    time.sleep(0)


def stable_read(rec: Record) -> tuple[Any, int, int]:
    """Return ``(value, word, committer_tid)`` from one unlocked version of ``rec``."""
    while True:
        w = rec.word
        if w & 1:
            _pause()
            continue
        value = rec.value
        tid = rec.tid
        if rec.word == w:
            return value, w, tid


class Table:
    def __init__(self, name: str, key_schema: tuple[str, ...] = ("key",),
                 leaf_capacity: int = LEAF_CAPACITY) -> None:
        if leaf_capacity < 2:
            raise ValueError("leaf_capacity must be >= 2")
        self.id = next(_table_ids)
        self.name = name
        self.key_schema = tuple(key_schema)
        self.leaf_capacity = leaf_capacity
        self._records: dict[Any, Record] = {}
        self._pending: dict[Any, object] = {}
        first = Leaf([])
        self._leaves: list[Leaf] = [first]
        # _lows[i] is the low bound of _leaves[i + 1]
        self._lows: list[Any] = []
        self._latch = threading.Lock()

    def __repr__(self) -> str:
        return f"Table({self.name!r}, rows={len(self._records)})"

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: Any) -> bool:
        return key in self._records

    # -- structure -----------------------------------------------------------------

    def bulk_load(self, items: Iterable[tuple[Any, Any]], fill: float = 1.0) -> None:
        """Populate an empty table; not safe against concurrent access."""
        if self._records:
            raise ContractViolation(f"bulk_load into non-empty table {self.name}")
        rows = sorted(items, key=lambda kv: kv[0])
        per_leaf = max(1, min(self.leaf_capacity, int(self.leaf_capacity * fill)))
        records = {}
        for key, value in rows:
            if key in records:
                raise ContractViolation(f"duplicate key {key!r} in bulk load of {self.name}")
            records[key] = Record(value)
        keys = [k for k, _ in rows]
        chunks = [keys[i:i + per_leaf] for i in range(0, len(keys), per_leaf)] or [[]]
        leaves = []
        for i, chunk in enumerate(chunks):
            low = None if i == 0 else chunk[0]
            leaves.append(Leaf(chunk, low=low))
        for left, right in zip(leaves, leaves[1:]):
            left.high = right.low
            left.next = right
            right.prev = left
        self._records = records
        self._leaves = leaves
        self._lows = [leaf.low for leaf in leaves[1:]]

    def _leaf_for(self, key: Any) -> Leaf:
        while True:
            i = bisect.bisect_right(self._lows, key)
            leaf = self._leaves[i]
            if leaf.covers(key):
                return leaf

    def observe_leaf(self, key: Any) -> tuple[Leaf, int]:
        """Return the leaf covering ``key`` with a version read while it still covered it."""
        while True:
            leaf = self._leaf_for(key)
            v = leaf.version
            if leaf.covers(key):
                return leaf, v

    def leaves(self) -> list[Leaf]:
        return list(self._leaves)

    def _split(self, leaf: Leaf) -> None:
        # caller holds the latch
        mid = len(leaf.keys) // 2
        right = Leaf(leaf.keys[mid:], low=leaf.keys[mid], high=leaf.high)
        right.prev = leaf
        right.next = leaf.next
        if leaf.next is not None:
            leaf.next.prev = right
        leaf.next = right
        idx = self._leaves.index(leaf)
        # publish the new leaf before narrowing the old one; readers re-check coverage
        self._leaves.insert(idx + 1, right)
        self._lows.insert(idx, right.low)
        leaf.high = right.low
        leaf.keys = leaf.keys[:mid]

    # -- reads ---------------------------------------------------------------------

    def read(self, key: Any) -> Lookup:
        rec = self._records.get(key)
        if rec is None:
            node = self.observe_leaf(key)
            rec = self._records.get(key)
            if rec is None:
                return Lookup(None, None, None, node)
        value, w, tid = stable_read(rec)
        return Lookup(value, VersionWord(w >> 1, False, tid), rec, None)

    def get(self, key: Any) -> tuple[Any, VersionWord | None] | tuple[None, tuple[Leaf, int]]:
        """Point read.

        Returns ``(value, VersionWord)`` for a present key and
        ``(None, (leaf, leaf_version))`` for an absent one.
        """
        look = self.read(key)
        if look.record is None:
            return None, look.node
        return look.value, look.word

    def scan_records(self, lo: Any, hi: Any, limit: int | None = None,
                     reverse: bool = False) -> tuple[list[tuple[Any, Record, Any, int, int]],
                                                     list[tuple[Leaf, int]]]:
        """Raw range scan over ``[lo, hi]``.

        Returns ``(entries, nodes)`` where entries are
        ``(key, record, value, version, committer_tid)`` in scan order.
        """
        if hi < lo:
            raise ValueError(f"malformed range: {lo!r} > {hi!r}")
        if limit is not None and limit < 0:
            raise ValueError("limit must be >= 0")
        entries: list[tuple[Any, Record, Any, int, int]] = []
        nodes: list[tuple[Leaf, int]] = []
        leaf, v = self.observe_leaf(hi if reverse else lo)
        while True:
            keys = leaf.keys
            nxt = leaf.prev if reverse else leaf.next
            low, high = leaf.low, leaf.high
            if leaf.version != v:
                v = leaf.version
                continue
            nodes.append((leaf, v))
            if reverse:
                start = bisect.bisect_left(keys, lo)
                end = bisect.bisect_right(keys, hi)
                selected = keys[end - 1:start - 1 if start else None:-1] if end > start else []
            else:
                selected = keys[bisect.bisect_left(keys, lo):bisect.bisect_right(keys, hi)]
            if limit is not None and len(selected) > limit - len(entries):
                selected = selected[:limit - len(entries)]
            records = self._records
            for key in selected:
                rec = records[key]
                # stable_read, inlined for the hot path
                while True:
                    w = rec.word
                    if w & 1:
                        _pause()
                        continue
                    value = rec.value
                    tid = rec.tid
                    if rec.word == w:
                        break
                entries.append((key, rec, value, w >> 1, tid))
            if limit is not None and len(entries) >= limit:
                return entries, nodes
            if reverse:
                if low is None or low <= lo:
                    return entries, nodes
            elif high is None or high > hi:
                return entries, nodes
            # a neighbour split since we read the pointer: refetch it from the live leaf
            while nxt is not None and (nxt.high != low if reverse else nxt.low != high):
                _pause()
                nxt = leaf.prev if reverse else leaf.next
                low, high = leaf.low, leaf.high
            if nxt is None:
                return entries, nodes
            leaf = nxt
            v = leaf.version

    def scan(self, lo: Any, hi: Any, limit: int | None = None, reverse: bool = False) -> ScanResult:
        entries, nodes = self.scan_records(lo, hi, limit, reverse)
        return ScanResult([(k, val, VersionWord(ver, False, tid)) for k, _, val, ver, tid in entries],
                          nodes)

    def node_unchanged(self, leaf: Leaf, version: int, owner: object | None = None) -> bool:
        """True if ``leaf`` kept ``version`` and no other owner has an insert pending in it."""
        if leaf.version != version:
            return False
        if self._pending:
            for key, who in list(self._pending.items()):
                if who is not owner and leaf.covers(key):
                    return False
        return True

    def items(self) -> list[tuple[Any, Any]]:
        """Committed rows in key order (not a transactional read)."""
        out = []
        leaf: Leaf | None = self._leaves[0]
        while leaf is not None:
            for key in leaf.keys:
                out.append((key, self._records[key].value))
            leaf = leaf.next
        return out

    # -- locking and installation ---------------------------------------------------

    def lock_record(self, key: Any, owner: object) -> bool:
        """Try-acquire the record lock; re-locking by the same owner succeeds."""
        rec = self._records.get(key)
        if rec is None:
            raise ContractViolation(f"lock of absent key {key!r} in {self.name}")
        with self._latch:
            if rec.word & 1:
                return rec.owner is owner
            rec.owner = owner
            rec.word |= 1
            return True

    def unlock_record(self, key: Any, owner: object) -> None:
        rec = self._records.get(key)
        with self._latch:
            if rec is None or not rec.word & 1 or rec.owner is not owner:
                raise ContractViolation(f"unlock of {key!r} in {self.name} not held by caller")
            rec.owner = None
            rec.word &= ~1

    def reserve_insert(self, key: Any, owner: object) -> bool:
        """Claim an absent key for a later insert; False if present or claimed by another owner."""
        with self._latch:
            if key in self._records:
                return False
            who = self._pending.get(key)
            if who is None:
                self._pending[key] = owner
                return True
            return who is owner

    def release_insert(self, key: Any, owner: object) -> None:
        with self._latch:
            if self._pending.get(key) is not owner:
                raise ContractViolation(f"release of unreserved insert {key!r} in {self.name}")
            del self._pending[key]

    def install(self, key: Any, value: Any, commit_tid: int, owner: object) -> None:
        """Publish a committed value; releases the record lock or the insert reservation."""
        rec = self._records.get(key)
        if rec is not None:
            if not rec.word & 1 or rec.owner is not owner:
                raise ContractViolation(f"install of {key!r} in {self.name} without the lock")
            rec.value = value
            rec.tid = commit_tid
            rec.owner = None
            rec.word = ((rec.word >> 1) + 1) << 1
            return
        with self._latch:
            if self._pending.get(key) is not owner:
                raise ContractViolation(f"insert of {key!r} in {self.name} without reservation")
            leaf = self._leaf_for(key)
            self._records[key] = Record(value, version=1, tid=commit_tid)
            bisect.insort(leaf.keys, key)
            if len(leaf.keys) > self.leaf_capacity:
                self._split(leaf)
            del self._pending[key]
            leaf.version += 1
