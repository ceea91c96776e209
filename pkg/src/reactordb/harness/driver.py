"""Client workers and epoch-based measurement."""

from __future__ import annotations

import logging
import math
import os
import statistics
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from ..commit import TraceEntry
from ..deployment import DeploymentConfig, async_deployment, sync_deployment
from ..errors import ConfigurationError
from ..runtime import Runtime
from ..smartmart import DELAY, LoadParams, build, cart_name
from .workload import OrderGenerator, WorkloadConfig

log = logging.getLogger(__name__)

RNG_NAME = "MT19937 (random.Random), one stream per worker seeded seed + worker_id"


class Sample(NamedTuple):
    done_at: float
    committed: bool
    latency_us: float
    add_items_us: float
    checkout_us: float
    commit_us: float


@dataclass
class EpochStats:
    epoch: int | str
    committed: int
    aborted: int
    throughput: float
    mean_latency_us: float
    stddev_latency_us: float
    add_items_us: float
    checkout_us: float
    commit_us: float

    @property
    def attempts(self) -> int:
        return self.committed + self.aborted

    @property
    def abort_rate(self) -> float:
        return self.aborted / self.attempts if self.attempts else 0.0


def _mean(xs: list[float]) -> float:
    return statistics.fmean(xs) if xs else 0.0


def _stdev(xs: list[float]) -> float:
    return statistics.pstdev(xs) if len(xs) > 1 else 0.0


def summarize(epoch: int | str, samples: list[Sample], seconds: float) -> EpochStats:
    ok = [s for s in samples if s.committed]
    lat = [s.latency_us for s in ok]
    return EpochStats(epoch, len(ok), len(samples) - len(ok), len(ok) / seconds if seconds else 0.0,
                      _mean(lat), _stdev(lat), _mean([s.add_items_us for s in ok]),
                      _mean([s.checkout_us for s in ok]), _mean([s.commit_us for s in ok]))


def measure_epochs(samples: list[Sample], workload: WorkloadConfig, started: float
                   ) -> tuple[list[EpochStats], EpochStats]:
    """Bucket completion-stamped samples; drop warmup and anything after the last epoch."""
    buckets: list[list[Sample]] = [[] for _ in range(workload.epochs)]
    for s in samples:
        idx = math.floor((s.done_at - started) / workload.epoch_seconds) - workload.warmup_epochs
        if 0 <= idx < workload.epochs:
            buckets[idx].append(s)
    per_epoch = [summarize(i, b, workload.epoch_seconds) for i, b in enumerate(buckets)]
    pooled = [s for b in buckets for s in b]
    total = summarize("all", pooled, workload.epochs * workload.epoch_seconds)
    return per_epoch, total


def worker_loop(worker_id: int, workload: WorkloadConfig, params: LoadParams, runtime: Runtime,
                stop: threading.Event, out: list[Sample], max_interactions: int | None = None) -> None:
    """Run interactions (add_items, then checkout if that committed) until ``stop`` is set."""
    gen = OrderGenerator(workload, params, worker_id)
    cart = cart_name(gen.cart)
    clock = time.perf_counter
    n = 0
    while not stop.is_set() and (max_interactions is None or n < max_interactions):
        n += 1
        customer, lines = gen.next_order()
        t0 = clock()
        added = runtime.submit_root(cart, "add_items", customer, lines, True).result()
        t1 = clock()
        commit_us = added.outcome.commit_us
        if not added.committed:
            out.append(Sample(t1, False, (t1 - t0) * 1e6, (t1 - t0) * 1e6, 0.0, commit_us))
            continue
        bought = runtime.submit_root(cart, "checkout", workload.scan_window, workload.delay_ms,
                                     workload.record_history).result()
        t2 = clock()
        commit_us += bought.outcome.commit_us
        out.append(Sample(t2, bought.committed, (t2 - t0) * 1e6, (t1 - t0) * 1e6,
                          (t2 - t1) * 1e6, commit_us))


def deployment_for(name: str | DeploymentConfig, params: LoadParams, **kwargs) -> DeploymentConfig:
    if isinstance(name, DeploymentConfig):
        return name
    if name == "sync":
        return sync_deployment(params.sections, params.carts, params.customers_per_cart, **kwargs)
    if name == "async":
        cores = os.cpu_count() or 1
        if cores < params.sections + 1:
            log.warning("async deployment wants %d cores, only %d available", params.sections + 1, cores)
        return async_deployment(params.sections, params.carts, params.customers_per_cart, **kwargs)
    raise ConfigurationError(f"unknown deployment preset {name!r}")


def make_runtime(deployment: str | DeploymentConfig, params: LoadParams, trace: bool = False,
                 pin_cores: bool = False) -> Runtime:
    rt = Runtime(deployment_for(deployment, params), pin_cores=pin_cores)
    build(rt, params)
    if trace:
        rt.trace = []
    return rt


@dataclass
class PointResult:
    deployment: str
    workload: WorkloadConfig
    params: LoadParams
    epochs: list[EpochStats]
    total: EpochStats
    samples: list[Sample] = field(repr=False, default_factory=list)
    trace: list[TraceEntry] | None = field(repr=False, default=None)
    snapshot: dict | None = field(repr=False, default=None)
    failures: dict[str, int] = field(default_factory=dict)
    max_active: int = 0
    transactions: int = 0


def run_point(deployment: str | DeploymentConfig, workload: WorkloadConfig, params: LoadParams,
              trace: bool = False, keep_snapshot: bool = False, pin_cores: bool = False,
              prepare: Callable[[Runtime], None] | None = None,
              transactions: int | None = None) -> PointResult:
    """Load a fresh database, drive it for warmup + measured epochs, and collect statistics.

    With ``transactions`` set, the run instead stops once that many root
    transactions have finished (in-flight interactions still complete) and a
    single pooled row covers the whole run.
    """
    workload.validate(params)
    rt = make_runtime(deployment, params, trace=trace, pin_cores=pin_cores)
    failures: dict[str, int] = {}
    finished = [0]
    tally_lock = threading.Lock()
    stop = threading.Event()

    def tally(task, outcome) -> None:
        with tally_lock:
            finished[0] += 1
            if not outcome.committed:
                key = outcome.reason.value if outcome.reason else "unknown"
                failures[key] = failures.get(key, 0) + 1
            if transactions is not None and finished[0] >= transactions:
                stop.set()

    rt.on_root_complete = tally
    if prepare is not None:
        prepare(rt)
    if workload.delay_ms > 0:
        DELAY.chunks_for(workload.delay_ms)
    per_worker: list[list[Sample]] = [[] for _ in range(workload.workers)]
    threads = [threading.Thread(target=worker_loop, name=f"client-{w}",
                                args=(w, workload, params, rt, stop, per_worker[w]))
               for w in range(workload.workers)]
    with rt:
        rt.start()
        started = time.perf_counter()
        for t in threads:
            t.start()
        stop.wait(None if transactions is not None else workload.duration)
        stop.set()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - started
        max_active = max(e.scheduler.max_active for e in rt.executors())
    samples = sorted((s for ws in per_worker for s in ws), key=lambda s: s.done_at)
    if transactions is not None:
        epochs, total = [], summarize("all", samples, elapsed)
    else:
        epochs, total = measure_epochs(samples, workload, started)
    if total.committed == 0:
        log.warning("no committed interactions in any measured epoch")
    name = deployment if isinstance(deployment, str) else deployment.name
    return PointResult(name, workload, params, epochs, total, samples, rt.trace,
                       rt.snapshot() if keep_snapshot else None, failures, max_active, finished[0])
