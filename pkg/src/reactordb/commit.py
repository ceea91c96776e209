"""Linear two-phase commit across the containers spanned by a root transaction.

The coordinator runs on the root's thread once the root body and every
transitive sub-transaction have finished.  It locks write sets container by
container (source first, then remotes in ascending id), draws the commit tid,
verifies every read set and node set, and then installs writes everywhere with
that single tid.  Any failure aborts every spanned context.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, NamedTuple

from . import occ
from .occ import DbContext, Failure, Status

if TYPE_CHECKING:
    from .runtime import Container, Runtime, TransactionTask


@dataclass
class CommitOutcome:
    committed: bool
    commit_tid: int | None = None
    containers_spanned: list[int] = field(default_factory=list)
    reason: Failure | None = None
    failed_container: int | None = None
    commit_us: float = 0.0


class RootResult(NamedTuple):
    """What a root transaction's future resolves to."""

    value: Any
    outcome: CommitOutcome
    error: BaseException | None = None

    @property
    def committed(self) -> bool:
        return self.outcome.committed


class TraceEntry(NamedTuple):
    commit_tid: int
    reactor: str
    fn: str
    args: tuple
    value: Any


# (root task, container id) -> True to force that container's validation to fail
FaultHook = Callable[["TransactionTask", int], bool]


def collect_remote_containers(root: TransactionTask, src_container: int) -> list[int]:
    """Distinct ``dest_container`` ids over the sub-task tree, minus the source, ascending."""
    seen: set[int] = set()
    stack = list(root.sub_txns)
    while stack:
        task = stack.pop()
        if task.dest_container is not None and task.dest_container != src_container:
            seen.add(task.dest_container)
        stack.extend(task.sub_txns)
    return sorted(seen)


class Coordinator:
    def __init__(self, runtime: Runtime) -> None:
        self.runtime = runtime
        self.fault_hook: FaultHook | None = None
        # mutation switch for oracle tests: commit without checking read/node sets
        self.skip_read_validation = False

    def _verify(self, task: TransactionTask, cid: int, ctx: DbContext) -> bool:
        hook = self.fault_hook
        if hook is not None and hook(task, cid):
            ctx.failure = Failure.FAULT
            return False
        if self.skip_read_validation:
            ctx.status = Status.VALIDATED
            return True
        return occ.verify_reads(ctx)

    def commit_or_abort(self, root: TransactionTask, src: Container, success: bool) -> CommitOutcome:
        t0 = time.perf_counter()
        rt = self.runtime
        remotes = collect_remote_containers(root, src.id)
        spanned = [src.id] + remotes
        contexts: list[tuple[int, DbContext]] = []
        for cid in spanned:
            ctx = rt.containers[cid].get_db_ctx(root.tid)
            if ctx is not None:
                contexts.append((cid, ctx))

        outcome = CommitOutcome(False, None, spanned)
        if not success:
            outcome.reason = Failure.EXEC
        else:
            failed = next(((cid, ctx) for cid, ctx in contexts if not occ.lock_writes(ctx)), None)
            if failed is None:
                # every write lock is held: this is the serialization point
                commit_tid = rt.commit_tids.next()
                failed = next(((cid, ctx) for cid, ctx in contexts
                               if not self._verify(root, cid, ctx)), None)
            if failed is None:
                for _cid, ctx in contexts:
                    occ.write_phase(ctx, commit_tid)
                outcome.committed = True
                outcome.commit_tid = commit_tid
            else:
                outcome.failed_container, bad = failed
                outcome.reason = bad.failure
        if not outcome.committed:
            for _cid, ctx in contexts:
                occ.abort(ctx)
        for cid in spanned:
            rt.containers[cid].end(root.tid)
        outcome.commit_us = (time.perf_counter() - t0) * 1e6

        if outcome.committed and rt.trace is not None:
            rt.trace.append(TraceEntry(outcome.commit_tid, root.reactor, root.fn, root.args, root.value))
        hook = rt.on_root_complete
        if hook is not None:
            hook(root, outcome)
        root.result.set_result(RootResult(root.value if outcome.committed else None, outcome, root.error))
        return outcome
