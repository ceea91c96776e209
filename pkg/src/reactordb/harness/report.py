"""CSV output."""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Any, Iterable, TextIO

from .driver import EpochStats, PointResult

COLUMNS = ("scenario", "deployment", "workers", "order_size", "sections", "scan_window", "zipf",
           "delay_ms", "epoch", "committed", "aborted", "abort_rate", "throughput_ips",
           "mean_latency_us", "stddev_latency_us", "add_items_us", "checkout_us", "commit_us", "seed")


def _num(x: float) -> str:
    # repr() is locale-independent and always uses a decimal point
    return repr(round(x, 3))


def rows_for(scenario: str, point: PointResult, label: str | None = None) -> list[dict[str, Any]]:
    """One row per measured epoch plus an ``all`` row pooled over them."""
    w = point.workload
    base = {"scenario": scenario, "deployment": label or point.deployment, "workers": w.workers,
            "order_size": w.order_size, "sections": w.sections, "scan_window": w.scan_window,
            "zipf": "" if w.zipf is None else repr(w.zipf), "delay_ms": _num(w.delay_ms),
            "seed": w.seed}
    return [dict(base, **stat_fields(e)) for e in [*point.epochs, point.total]]


def stat_fields(e: EpochStats) -> dict[str, Any]:
    return {"epoch": e.epoch, "committed": e.committed, "aborted": e.aborted,
            "abort_rate": _num(e.abort_rate), "throughput_ips": _num(e.throughput),
            "mean_latency_us": _num(e.mean_latency_us), "stddev_latency_us": _num(e.stddev_latency_us),
            "add_items_us": _num(e.add_items_us), "checkout_us": _num(e.checkout_us),
            "commit_us": _num(e.commit_us)}


def write_csv(rows: Iterable[dict[str, Any]], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def emit_csv(rows: Iterable[dict[str, Any]], path: str | os.PathLike | None,
             metadata: dict[str, Any] | None = None) -> None:
    """Write rows to ``path`` (stdout for ``None`` or ``-``); metadata goes to ``<path>.meta.json``."""
    if path is None or str(path) == "-":
        write_csv(rows, sys.stdout)
        return
    p = Path(path)
    buf = io.StringIO()
    write_csv(rows, buf)
    p.write_text(buf.getvalue())
    if metadata is not None:
        Path(f"{p}.meta.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
