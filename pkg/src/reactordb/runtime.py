"""Containers, transaction executors and asynchronous dispatch.

Every executor owns a FIFO queue and a pool of worker threads.  A cooperative
scheduler caps the number of ACTIVE workers; a worker that waits on an
unresolved future steps down to BLOCKED so another READY worker may drain the
queue, and after the result arrives it finishes its task as UNBLOCKED before
returning to the pool as READY.
"""

from __future__ import annotations

import concurrent.futures
import enum
import itertools
import logging
import os
import queue
import threading
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

from . import occ
from .commit import CommitOutcome, Coordinator, RootResult
from .deployment import ContainerSpec, DeploymentConfig
from .errors import (ConcurrentContextAccess, ConfigurationError, ContractViolation,
                     SubTransactionFailed, UnknownFunction, UnknownReactor)
from .occ import DbContext, TidSource
from .reactor import ReactorContext, ReactorHandle, ReactorType
from .storage import LEAF_CAPACITY, Table

log = logging.getLogger(__name__)

_local = threading.local()
_STOP = object()


class ThreadState(enum.Enum):
    READY = "ready"
    ACTIVE = "active"
    BLOCKED = "blocked"
    UNBLOCKED = "unblocked"


_EDGES = {
    (ThreadState.READY, ThreadState.ACTIVE),
    (ThreadState.ACTIVE, ThreadState.BLOCKED),
    (ThreadState.BLOCKED, ThreadState.UNBLOCKED),
    (ThreadState.UNBLOCKED, ThreadState.BLOCKED),
    (ThreadState.ACTIVE, ThreadState.READY),
    (ThreadState.UNBLOCKED, ThreadState.READY),
}


class Worker:
    __slots__ = ("executor", "index", "state", "thread")

    def __init__(self, executor: TransactionExecutor, index: int) -> None:
        self.executor = executor
        self.index = index
        self.state = ThreadState.READY
        self.thread: threading.Thread | None = None


def current_worker() -> Worker | None:
    return getattr(_local, "worker", None)


class Future(concurrent.futures.Future):
    """Single-assignment result handle.

    ``result()`` called from an executor worker hands the worker's ACTIVE slot
    back to its scheduler while waiting.
    """

    def result(self, timeout: float | None = None) -> Any:
        if not self.done():
            worker = current_worker()
            if worker is not None:
                sched = worker.executor.scheduler
                sched.block(worker)
                try:
                    concurrent.futures.wait([self], timeout)
                finally:
                    sched.unblock(worker)
        return super().result(timeout)


def future_await(future: Future) -> Any:
    return future.result()


class Scheduler:
    """Admission control for one executor's pool."""

    def __init__(self, active_limit: int = 1) -> None:
        if active_limit < 1:
            raise ConfigurationError("active_limit must be >= 1")
        self.active_limit = active_limit
        self._cond = threading.Condition()
        self._counts = dict.fromkeys(ThreadState, 0)
        self.max_active = 0
        self.violations = 0
        self.blocks = 0
        self._stopping = False

    def counts(self) -> dict[ThreadState, int]:
        with self._cond:
            return dict(self._counts)

    def _move(self, worker: Worker, new: ThreadState) -> None:
        old = worker.state
        if (old, new) not in _EDGES:
            raise ContractViolation(f"illegal thread transition {old.value} -> {new.value}")
        self._counts[old] -= 1
        self._counts[new] += 1
        worker.state = new
        active = self._counts[ThreadState.ACTIVE]
        if active > self.max_active:
            self.max_active = active
        if active > self.active_limit:
            self.violations += 1

    def register(self, worker: Worker) -> None:
        with self._cond:
            worker.state = ThreadState.READY
            self._counts[ThreadState.READY] += 1

    def grant(self, worker: Worker) -> bool:
        """Wait for permission to run (READY -> ACTIVE); False once stopping."""
        with self._cond:
            self._cond.wait_for(
                lambda: self._stopping or self._counts[ThreadState.ACTIVE] < self.active_limit)
            if self._stopping:
                return False
            self._move(worker, ThreadState.ACTIVE)
            return True

    def block(self, worker: Worker) -> None:
        with self._cond:
            freed = worker.state is ThreadState.ACTIVE
            self._move(worker, ThreadState.BLOCKED)
            self.blocks += 1
            if freed:
                self._cond.notify()

    def unblock(self, worker: Worker) -> None:
        with self._cond:
            self._move(worker, ThreadState.UNBLOCKED)

    def release(self, worker: Worker) -> None:
        """Return to the pool after a task (ACTIVE/UNBLOCKED -> READY)."""
        with self._cond:
            freed = worker.state is ThreadState.ACTIVE
            self._move(worker, ThreadState.READY)
            if freed:
                self._cond.notify()

    def retire(self, worker: Worker) -> None:
        with self._cond:
            freed = worker.state is ThreadState.ACTIVE
            self._counts[worker.state] -= 1
            if freed:
                self._cond.notify()

    def stop(self) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify_all()


@dataclass(eq=False, slots=True)
class TransactionTask:
    fn: str
    args: tuple
    reactor: str
    is_root: bool
    result: Future
    tid: int | None = None
    parent: TransactionTask | None = None
    sub_txns: list[TransactionTask] = field(default_factory=list)
    db_ctx: DbContext | None = None
    dest_container: int | None = None
    container: Container | None = None
    value: Any = None
    error: BaseException | None = None

    def dispatch_result(self, success: bool = True) -> None:
        if self.error is not None:
            self.result.set_exception(self.error)
        elif not success:
            self.result.set_exception(SubTransactionFailed(f"{self.fn} on {self.reactor}"))
        else:
            self.result.set_result(self.value)

    def wait_for_subtxns(self) -> bool:
        """Wait for every transitive child; False if any of them failed."""
        ok = True
        for child in self.sub_txns:
            try:
                child.result.result()
            except BaseException:
                ok = False
            if not child.wait_for_subtxns():
                ok = False
        return ok


class TransactionExecutor:
    def __init__(self, eid: int, container: Container, pool_size: int = 4, active_limit: int = 1,
                 core_id: int | None = None) -> None:
        self.id = eid
        self.container = container
        self.queue: queue.SimpleQueue = queue.SimpleQueue()
        self.scheduler = Scheduler(active_limit)
        self.pool_size = pool_size
        self.core_id = core_id
        self.workers: list[Worker] = []
        self.enqueued = 0

    def __repr__(self) -> str:
        return f"TransactionExecutor(container={self.container.id}, id={self.id})"

    def enqueue(self, task: TransactionTask) -> None:
        self.enqueued += 1
        self.queue.put(task)

    def start(self, pin: bool = False) -> None:
        for i in range(self.pool_size):
            w = Worker(self, i)
            self.scheduler.register(w)
            w.thread = threading.Thread(target=self._execute_forever, args=(w, pin), daemon=True,
                                        name=f"exec-c{self.container.id}-e{self.id}-{i}")
            self.workers.append(w)
            w.thread.start()

    def stop(self, timeout: float = 5.0) -> None:
        for _ in self.workers:
            self.queue.put(_STOP)
        for w in self.workers:
            if w.thread is not None:
                w.thread.join(timeout)
        self.scheduler.stop()

    def _execute_forever(self, worker: Worker, pin: bool) -> None:
        _local.worker = worker
        if pin and self.core_id is not None and hasattr(os, "sched_setaffinity"):
            try:
                os.sched_setaffinity(threading.get_native_id(), {self.core_id})
            except OSError:
                log.debug("could not pin %r to core %s", self, self.core_id)
        runtime = self.container.runtime
        sched = self.scheduler
        while sched.grant(worker):
            while worker.state is ThreadState.ACTIVE:
                task = self.queue.get()
                if task is _STOP:
                    sched.retire(worker)
                    return
                runtime.execute_task(task, self.container)
            sched.release(worker)
        sched.retire(worker)


class Container:
    def __init__(self, spec: ContainerSpec, runtime: Runtime) -> None:
        self.id = spec.id
        self.spec = spec
        self.runtime = runtime
        self.router_policy = spec.router
        cores = spec.core_ids or (None,) * spec.executors
        self.executors = [TransactionExecutor(i, self, spec.pool_size, spec.active_limit, cores[i])
                          for i in range(spec.executors)]
        self.reactor_executors: dict[str, tuple[int, ...]] = {}
        self.tables: dict[tuple[str, str], Table] = {}
        self.ctx_table: dict[int, DbContext] = {}
        self._ctx_lock = threading.Lock()
        self._rr: dict[str, Any] = {}

    def __repr__(self) -> str:
        return f"Container(id={self.id}, executors={len(self.executors)})"

    def route(self, reactor: str) -> int:
        try:
            mapped = self.reactor_executors[reactor]
        except KeyError:
            raise ConfigurationError(
                f"reactor {reactor!r} has no executor in container {self.id}") from None
        if len(mapped) == 1:
            return mapped[0]
        if self.router_policy == "round_robin":
            counter = self._rr.get(reactor)
            if counter is None:
                counter = self._rr.setdefault(reactor, itertools.count())
            return mapped[next(counter) % len(mapped)]
        return mapped[zlib.crc32(reactor.encode()) % len(mapped)]

    def schedule(self, task: TransactionTask) -> None:
        self.executors[self.route(task.reactor)].enqueue(task)

    def create_db_ctx(self, tid: int) -> DbContext:
        ctx = DbContext(tid, self.id)
        with self._ctx_lock:
            if tid in self.ctx_table:
                raise ContractViolation(f"context for tid {tid} already exists in container {self.id}")
            self.ctx_table[tid] = ctx
        return ctx

    def get_or_create_db_ctx(self, tid: int) -> DbContext:
        with self._ctx_lock:
            ctx = self.ctx_table.get(tid)
            if ctx is None:
                ctx = self.ctx_table[tid] = DbContext(tid, self.id)
            return ctx

    def get_db_ctx(self, tid: int) -> DbContext | None:
        return self.ctx_table.get(tid)

    def end(self, tid: int) -> None:
        with self._ctx_lock:
            self.ctx_table.pop(tid, None)

    def table(self, reactor: str, relation: str) -> Table:
        try:
            return self.tables[(reactor, relation)]
        except KeyError:
            raise ConfigurationError(f"no table {relation!r} for reactor {reactor!r}") from None


class Runtime:
    def __init__(self, config: DeploymentConfig, pin_cores: bool = False,
                 leaf_capacity: int = LEAF_CAPACITY) -> None:
        config.validate()
        self.config = config
        self.pin_cores = pin_cores
        self.leaf_capacity = leaf_capacity
        self.containers: dict[int, Container] = {c.id: Container(c, self) for c in config.containers}
        self.directory: dict[str, int] = {}
        self.types: dict[str, ReactorType] = {}
        self.reactors: dict[str, str] = {}
        self.root_tids = TidSource()
        self.commit_tids = TidSource()
        self.coordinator = Coordinator(self)
        self.trace: list | None = None
        self.on_root_complete: Callable[[TransactionTask, CommitOutcome], None] | None = None
        self._sealed = False
        self._started = False

    def __repr__(self) -> str:
        return f"Runtime({self.config.name!r}, containers={len(self.containers)})"

    def __enter__(self) -> Runtime:
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()

    # -- lifecycle ---------------------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for c in self.containers.values():
            for e in c.executors:
                e.start(self.pin_cores)

    def shutdown(self) -> None:
        if not self._started:
            return
        self._started = False
        for c in self.containers.values():
            for e in c.executors:
                e.stop()

    def executors(self) -> list[TransactionExecutor]:
        return [e for c in self.containers.values() for e in c.executors]

    # -- schema --------------------------------------------------------------------------

    def declare_type(self, rtype: ReactorType) -> None:
        if self._sealed:
            raise ConfigurationError("reactor types must be declared before the first transaction")
        if rtype.name in self.types:
            raise ConfigurationError(f"reactor type {rtype.name!r} already declared")
        self.types[rtype.name] = rtype

    def create_reactor(self, type_name: str, reactor_name: str) -> ReactorHandle:
        if self._sealed:
            raise ConfigurationError("reactors must be created before the first transaction")
        rtype = self.types.get(type_name)
        if rtype is None:
            raise ConfigurationError(f"unknown reactor type {type_name!r}")
        if reactor_name in self.reactors:
            raise ConfigurationError(f"reactor name {reactor_name!r} already in use")
        placement = self.config.resolve(reactor_name)
        container = self.containers[placement.container]
        container.reactor_executors[reactor_name] = placement.executors
        for rel in rtype.relations:
            container.tables[(reactor_name, rel.name)] = Table(
                f"{reactor_name}.{rel.name}", rel.key, self.leaf_capacity)
        self.directory[reactor_name] = container.id
        self.reactors[reactor_name] = type_name
        return ReactorHandle(reactor_name, type_name)

    def table(self, reactor: str, relation: str) -> Table:
        cid = self.directory.get(reactor)
        if cid is None:
            raise ConfigurationError(f"unknown reactor {reactor!r}")
        return self.containers[cid].table(reactor, relation)

    def snapshot(self) -> dict[tuple[str, str], list[tuple[Any, Any]]]:
        """Committed contents of every table keyed by ``(reactor, relation)``."""
        out = {}
        for c in self.containers.values():
            for key, table in c.tables.items():
                out[key] = table.items()
        return dict(sorted(out.items()))

    # -- dispatch ------------------------------------------------------------------------

    def exec_call(self, parent: TransactionTask | None, fn: str, reactor: str, args: tuple,
                  src_container: Container | None) -> Future:
        fut = Future()
        task = TransactionTask(fn, tuple(args), reactor, parent is None, fut, parent=parent)
        if parent is not None:
            parent.sub_txns.append(task)
            task.tid = parent.tid
        dst_id = self.directory.get(reactor)
        if dst_id is None:
            task.error = UnknownReactor(reactor)
            fut.set_exception(task.error)
            return fut
        dst = self.containers[dst_id]
        if parent is not None and dst is src_container:
            # co-located: share the caller's context and run on this thread
            task.db_ctx = parent.db_ctx
            task.container = dst
            self.run_body(task, owned=True)
            task.dispatch_result()
        else:
            task.dest_container = dst_id
            dst.schedule(task)
        return fut

    def run_body(self, task: TransactionTask, owned: bool = False) -> bool:
        ctx = task.db_ctx
        if not owned and not occ.acquire_ctx(ctx):
            task.error = ConcurrentContextAccess(
                f"tid {task.tid}: context in container {task.container.id} already in use")
            return False
        try:
            rtype = self.types[self.reactors[task.reactor]]
            body = rtype.functions.get(task.fn)
            if body is None:
                raise UnknownFunction(f"{rtype.name} has no function {task.fn!r}")
            task.value = body(ReactorContext(self, task), *task.args)
            return True
        except Exception as exc:
            task.error = exc
            return False
        finally:
            if not owned:
                occ.release_ctx(ctx)

    def execute_task(self, task: TransactionTask, container: Container) -> None:
        """One iteration of the executor workflow for a dequeued (sub-)transaction."""
        try:
            if task.is_root:
                task.tid = self.root_tids.next()
                ctx = container.create_db_ctx(task.tid)
            else:
                ctx = container.get_or_create_db_ctx(task.tid)
            task.db_ctx = ctx
            task.container = container
            ok = self.run_body(task)
            ok = task.wait_for_subtxns() and ok
            if task.is_root:
                self.coordinator.commit_or_abort(task, container, ok)
            else:
                task.dispatch_result(ok)
        except BaseException as exc:  # engine bug: keep the worker alive, fail the task
            log.exception("executor failure on %s/%s", task.reactor, task.fn)
            if not task.result.done():
                task.result.set_exception(exc)

    def submit_root(self, reactor: str, fn: str, *args: Any) -> Future:
        """Client ingress: enqueue a root transaction at the reactor's container."""
        self._sealed = True
        if not self._started:
            raise ContractViolation("runtime not started")
        return self.exec_call(None, fn, reactor, args, None)

    def run_inline(self, reactor: str, fn: str, *args: Any) -> RootResult:
        """Execute a root transaction on the calling thread.

        Only valid when every reactor it reaches lives in one container, as in
        the serial deployment used for replay and loading.
        """
        self._sealed = True
        fut = Future()
        task = TransactionTask(fn, tuple(args), reactor, True, fut)
        cid = self.directory.get(reactor)
        if cid is None:
            raise UnknownReactor(reactor)
        self.execute_task(task, self.containers[cid])
        return fut.result()


def bootstrap(config: DeploymentConfig, start: bool = True, **kwargs: Any) -> Runtime:
    rt = Runtime(config, **kwargs)
    if start:
        rt.start()
    return rt
