"""Per-(transaction, container) optimistic concurrency control contexts.

A :class:`DbContext` buffers writes and inserts and records what it read:
record versions in the read set and leaf versions in the node set.  Commit is
split into a locking step (write set in a global ``(table id, key)`` order) and
a verification step (read set and node set unchanged), followed by either the
write phase or abort.
"""

from __future__ import annotations

import enum
import itertools
import threading
import time
from typing import Any

from .errors import ContractViolation
from .storage import Leaf, Record, Table

LOCK_RETRIES = 100


class Status(enum.Enum):
    ACTIVE = "active"
    VALIDATED = "validated"
    COMMITTED = "committed"
    ABORTED = "aborted"


class Failure(str, enum.Enum):
    """Why a context failed validation."""

    LOCK = "lock"          # write lock / insert reservation not obtained
    INSERT = "insert"      # inserted key already exists
    MISSING = "missing"    # write to a key that does not exist
    READ = "read"          # read-set record changed or locked by someone else
    NODE = "node"          # scanned leaf changed membership
    FAULT = "fault"        # injected by a test hook
    EXEC = "error"         # the body or a sub-transaction raised


class TidSource:
    """Process-wide monotonic transaction id counter."""

    def __init__(self, start: int = 1) -> None:
        # itertools.count.__next__ is atomic under the GIL
        self._counter = itertools.count(start)

    def next(self) -> int:
        return next(self._counter)


class DbContext:
    __slots__ = ("tid", "container_id", "read_set", "node_set", "write_set", "insert_set",
                 "status", "failure", "_in_use", "_held", "_buffered")

    def __init__(self, tid: int, container_id: int = 0) -> None:
        self.tid = tid
        self.container_id = container_id
        self.read_set: list[tuple[Table, Any, Record, int]] = []
        self.node_set: list[tuple[Table, Leaf, int]] = []
        self.write_set: dict[tuple[Table, Any], Any] = {}
        self.insert_set: dict[tuple[Table, Any], Any] = {}
        self.status = Status.ACTIVE
        self.failure: Failure | None = None
        self._in_use = threading.Lock()
        # (table, key, is_insert) acquired during lock_writes
        self._held: list[tuple[Table, Any, bool]] = []
        # table -> keys with a buffered write or insert, for scan merging
        self._buffered: dict[Table, set] = {}

    def __repr__(self) -> str:
        return (f"DbContext(tid={self.tid}, container={self.container_id}, "
                f"status={self.status.value}, reads={len(self.read_set)}, "
                f"writes={len(self.write_set)}, inserts={len(self.insert_set)})")

    @property
    def is_read_only(self) -> bool:
        return not self.write_set and not self.insert_set


def acquire_ctx(ctx: DbContext) -> bool:
    return ctx._in_use.acquire(blocking=False)


def release_ctx(ctx: DbContext) -> None:
    ctx._in_use.release()


def _check_active(ctx: DbContext) -> None:
    if ctx.status is not Status.ACTIVE:
        raise ContractViolation(f"operation on {ctx.status.value} context (tid {ctx.tid})")


def ctx_read(ctx: DbContext, table: Table, key: Any) -> Any:
    """Tracked point read; returns ``None`` for an absent key."""
    wk = (table, key)
    if ctx.write_set and wk in ctx.write_set:
        return ctx.write_set[wk]
    if ctx.insert_set and wk in ctx.insert_set:
        return ctx.insert_set[wk]
    look = table.read(key)
    if look.record is None:
        leaf, v = look.node
        ctx.node_set.append((table, leaf, v))
        return None
    ctx.read_set.append((table, key, look.record, look.word.version))
    return look.value


def ctx_scan(ctx: DbContext, table: Table, lo: Any, hi: Any, limit: int | None = None,
             reverse: bool = False) -> list[tuple[Any, Any]]:
    """Tracked range scan over ``[lo, hi]`` merged with this context's own buffers."""
    entries, nodes = table.scan_records(lo, hi, limit, reverse)
    read_set = ctx.read_set
    for key, rec, _value, version, _tid in entries:
        read_set.append((table, key, rec, version))
    for leaf, v in nodes:
        ctx.node_set.append((table, leaf, v))
    rows = [(key, value) for key, _rec, value, _v, _t in entries]
    mine = ctx._buffered.get(table)
    if not mine:
        return rows
    hits = [key for key in mine if lo <= key <= hi]
    if not hits:
        return rows
    merged = dict(rows)
    for key in hits:
        wk = (table, key)
        if wk in ctx.insert_set:
            merged[key] = ctx.insert_set[wk]
        elif key in merged:
            merged[key] = ctx.write_set[wk]
    out = sorted(merged.items(), key=lambda kv: kv[0], reverse=reverse)
    return out if limit is None else out[:limit]


def ctx_write(ctx: DbContext, table: Table, key: Any, value: Any) -> None:
    """Buffer an update of an existing key."""
    _check_active(ctx)
    wk = (table, key)
    if wk in ctx.insert_set:
        ctx.insert_set[wk] = value
    else:
        ctx.write_set[wk] = value
    ctx._buffered.setdefault(table, set()).add(key)


def ctx_insert(ctx: DbContext, table: Table, key: Any, value: Any) -> None:
    """Buffer an insert; a clash with an existing key surfaces at validation."""
    _check_active(ctx)
    ctx.insert_set[(table, key)] = value
    ctx._buffered.setdefault(table, set()).add(key)


def _ordered_writes(ctx: DbContext) -> list[tuple[Table, Any, bool]]:
    items = [(t, k, False) for t, k in ctx.write_set]
    items.extend((t, k, True) for t, k in ctx.insert_set)
    items.sort(key=lambda e: (e[0].id, e[1]))
    return items


def lock_writes(ctx: DbContext, retries: int = LOCK_RETRIES) -> bool:
    """Lock the write set and reserve inserts in global order.

    Try-locks with bounded retries; on failure the context keeps whatever it
    acquired so that :func:`abort` can release it.
    """
    _check_active(ctx)
    for table, key, is_insert in _ordered_writes(ctx):
        if is_insert:
            if key in table:
                ctx.failure = Failure.INSERT
                return False
            acquire = table.reserve_insert
        else:
            if key not in table:
                ctx.failure = Failure.MISSING
                return False
            acquire = table.lock_record
        for attempt in range(retries):
            if acquire(key, ctx):
                ctx._held.append((table, key, is_insert))
                break
            if is_insert and key in table:
                ctx.failure = Failure.INSERT
                return False
            time.sleep(0 if attempt < 10 else 1e-5 * attempt)
        else:
            ctx.failure = Failure.LOCK
            return False
    return True


def verify_reads(ctx: DbContext) -> bool:
    """Check read set and node set; on success the context becomes VALIDATED."""
    _check_active(ctx)
    for _table, _key, rec, version in ctx.read_set:
        w = rec.word
        if w >> 1 != version or (w & 1 and rec.owner is not ctx):
            ctx.failure = Failure.READ
            return False
    for table, leaf, version in ctx.node_set:
        if not table.node_unchanged(leaf, version, ctx):
            ctx.failure = Failure.NODE
            return False
    ctx.status = Status.VALIDATED
    return True


def validate(ctx: DbContext) -> bool:
    """Single-container validation: lock the write set, then verify reads.

    Locks stay held after a successful validation until :func:`write_phase`
    or :func:`abort`.
    """
    return lock_writes(ctx) and verify_reads(ctx)


def write_phase(ctx: DbContext, commit_tid: int) -> None:
    if ctx.status is not Status.VALIDATED:
        raise ContractViolation(f"write phase on {ctx.status.value} context (tid {ctx.tid})")
    for table, key, is_insert in ctx._held:
        buf = ctx.insert_set if is_insert else ctx.write_set
        table.install(key, buf[(table, key)], commit_tid, ctx)
    ctx._held.clear()
    ctx.write_set.clear()
    ctx.insert_set.clear()
    ctx._buffered.clear()
    ctx.status = Status.COMMITTED


def abort(ctx: DbContext) -> None:
    if ctx.status is Status.COMMITTED:
        raise ContractViolation(f"abort of committed context (tid {ctx.tid})")
    for table, key, is_insert in ctx._held:
        if is_insert:
            table.release_insert(key, ctx)
        else:
            table.unlock_record(key, ctx)
    ctx._held.clear()
    ctx.write_set.clear()
    ctx.insert_set.clear()
    ctx._buffered.clear()
    ctx.status = Status.ABORTED
