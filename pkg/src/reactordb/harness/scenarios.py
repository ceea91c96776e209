"""Parameter sweeps over deployments and workloads."""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Callable, Iterator

from ..errors import ConfigurationError
from ..smartmart import LoadParams
from .driver import PointResult, run_point
from .report import rows_for
from .verify import verify_serializability
from .workload import WorkloadConfig

SCAN_WINDOWS = (10, 20, 40, 80, 150, 300)
SKEW_THETAS = (0.01, 0.2, 0.4, 0.6, 0.8, 0.99, 5.0)
SCENARIOS = ("scan_size", "parallel_degree", "speedup", "load", "scaleup", "skew", "single")

# one sweep point: (deployment label, deployment preset or config, workload, load parameters)
Point = tuple[str, Any, WorkloadConfig, LoadParams]


def _with_carts(params: LoadParams, workers: int) -> LoadParams:
    return params if params.carts >= workers else replace(params, carts=workers)


def points(name: str, deployments: list, base: WorkloadConfig, params: LoadParams) -> Iterator[Point]:
    """Expand a scenario into points; deployments are preset names or parsed configs."""
    S = params.sections
    if any(not isinstance(d, str) for d in deployments):
        for label, _d, wl, p in points(name, [getattr(d, "name", d) for d in deployments], base, params):
            yield label, next(d for d in deployments if getattr(d, "name", d) == _d), wl, p
        return
    if name == "single":
        for d in deployments:
            yield d, d, base, _with_carts(params, base.workers)
    elif name == "scan_size":
        loaded = replace(params, history_per_item=max(params.history_per_item, max(SCAN_WINDOWS)))
        for n in (32, 64):
            for window in SCAN_WINDOWS:
                for d in deployments:
                    yield d, d, base.with_(order_size=n, sections=S, scan_window=window, zipf=None), loaded
    elif name == "parallel_degree":
        for k in range(1, S + 1):
            for d in deployments:
                yield d, d, base.with_(order_size=4 * k, sections=k, zipf=None), params
    elif name == "speedup":
        for n in (8, 32, 64):
            for k in range(1, S + 1):
                if n % k:
                    continue
                for d in deployments:
                    yield d, d, base.with_(order_size=n, sections=k, zipf=None, delay_ms=0.0), params
        delay = base.delay_ms or 3.0
        for k in range(1, S + 1):
            if 32 % k == 0:
                for d in deployments:
                    yield d, d, base.with_(order_size=32, sections=k, zipf=None, delay_ms=delay), params
    elif name == "load":
        for w in range(1, 9):
            for d in deployments:
                yield d, d, base.with_(workers=w, order_size=32, sections=S, zipf=None), _with_carts(params, w)
    elif name == "scaleup":
        for w in (1, 2, 4, 8):
            if w > S:
                continue
            wl = base.with_(workers=w, order_size=32, sections=w, zipf=None)
            p = _with_carts(params, w)
            for d in deployments:
                if d == "async":
                    yield "async-fixed", d, wl.with_(section_choice="fixed"), p
                    yield "async-all", d, wl.with_(section_choice="all"), p
                else:
                    yield d, d, wl, p
    elif name == "skew":
        for theta in SKEW_THETAS:
            for d in deployments:
                yield d, d, base.with_(order_size=32, sections=S, zipf=theta), params
    else:
        raise ConfigurationError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")


def run_scenario(name: str, deployments: list, base: WorkloadConfig, params: LoadParams,
                 verify: bool = False, on_point: Callable[[str, PointResult], None] | None = None
                 ) -> tuple[list[dict], list[str]]:
    """Run every point of a sweep; returns CSV rows and verification failure messages."""
    rows: list[dict] = []
    failures: list[str] = []
    for label, preset, workload, p in points(name, deployments, base, params):
        res = run_point(preset, workload, p, trace=verify, keep_snapshot=verify)
        rows.extend(rows_for(name, res, label))
        if verify:
            report = verify_serializability(res.trace, p, res.snapshot, workload.record_history)
            if not report.passed:
                failures.append(f"{label} {workload}: {report.summary()}")
        if on_point is not None:
            on_point(label, res)
    return rows, failures


def ratio_summary(rows: list[dict]) -> list[str]:
    """async/sync throughput ratios for matching pooled rows."""
    def key(r: dict) -> tuple:
        return (r["workers"], r["order_size"], r["sections"], r["scan_window"], r["zipf"], r["delay_ms"])

    pooled = [r for r in rows if r["epoch"] == "all"]
    sync = {key(r): float(r["throughput_ips"]) for r in pooled if r["deployment"] == "sync"}
    out = []
    for r in pooled:
        if r["deployment"].startswith("async") and key(r) in sync and sync[key(r)] > 0:
            ratio = float(r["throughput_ips"]) / sync[key(r)]
            w, n, k, window, zipf, delay = key(r)
            out.append(f"{r['deployment']}/sync W={w} N={n} k={k} window={window} zipf={zipf or '-'} "
                       f"delay={delay}ms: {ratio:.2f}")
    return out
