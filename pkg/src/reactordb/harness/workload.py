"""Workload configuration and the order generators."""

from __future__ import annotations

import bisect
import configparser
import os
import random
from dataclasses import dataclass, fields, replace
from itertools import accumulate
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigurationError
from ..smartmart import LoadParams

SECTION_CHOICES = ("fixed", "all")


@dataclass(frozen=True)
class WorkloadConfig:
    workers: int = 1
    order_size: int = 32
    sections: int = 4
    scan_window: int = 40
    zipf: float | None = None
    delay_ms: float = 0.0
    section_choice: str = "all"
    seed: int = 1
    epochs: int = 5
    epoch_seconds: float = 1.0
    warmup_epochs: int = 2
    record_history: bool = True
    disjoint_items: bool = False

    def validate(self, params: LoadParams | None = None) -> WorkloadConfig:
        def bad(key: str, why: str) -> ConfigurationError:
            return ConfigurationError(f"workload {key!r}: {why}")

        if self.workers < 1:
            raise bad("workers", f"must be >= 1 (got {self.workers})")
        if self.order_size < 0:
            raise bad("order_size", f"must be >= 0 (got {self.order_size})")
        if self.sections < 1:
            raise bad("sections", f"must be >= 1 (got {self.sections})")
        if self.zipf is None and self.order_size % self.sections:
            raise bad("sections", f"{self.sections} does not divide order_size {self.order_size}")
        if self.zipf is not None and self.zipf < 0:
            raise bad("zipf", f"must be >= 0 (got {self.zipf})")
        if self.scan_window < 0:
            raise bad("scan_window", "must be >= 0")
        if self.delay_ms < 0:
            raise bad("delay_ms", "must be >= 0")
        if self.section_choice not in SECTION_CHOICES:
            raise bad("section_choice", f"must be one of {SECTION_CHOICES}")
        if self.epochs < 1 or self.epoch_seconds <= 0 or self.warmup_epochs < 0:
            raise bad("epochs", "need epochs >= 1, epoch_seconds > 0, warmup_epochs >= 0")
        if params is not None:
            if self.sections > params.sections:
                raise bad("sections", f"{self.sections} exceeds the {params.sections} loaded sections")
            per_section = self.order_size if self.zipf is not None else self.order_size // self.sections
            pool = params.items_per_section
            if self.disjoint_items:
                pool //= self.workers
            if per_section > pool:
                raise bad("order_size", f"{per_section} distinct items per section, only {pool} available")
        return self

    @property
    def duration(self) -> float:
        return (self.warmup_epochs + self.epochs) * self.epoch_seconds

    def with_(self, **changes: Any) -> WorkloadConfig:
        return replace(self, **changes)


_COERCE = {f.name: f.type for f in fields(WorkloadConfig)}


def _coerce(key: str, raw: Any) -> Any:
    if key not in _COERCE:
        raise ConfigurationError(f"unknown workload key {key!r}")
    kind = _COERCE[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "bool":
            if text.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return text.lower() in ("1", "true", "yes", "on")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none", "uniform") else float(text)
    except ValueError:
        raise ConfigurationError(f"workload {key!r}: cannot parse {raw!r}") from None
    return text


def parse_workload(source: str | os.PathLike | Mapping[str, Any] | None = None,
                   **overrides: Any) -> WorkloadConfig:
    """Build a validated workload from an INI file (``[workload]`` section), a mapping, or keywords."""
    values: dict[str, Any] = {}
    if isinstance(source, Mapping):
        values.update(source)
    elif source is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            text = Path(source).read_text()
            parser.read_string(text)
        except OSError as exc:
            raise ConfigurationError(f"cannot read workload file {source}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed workload file: {exc}") from None
        if not parser.has_section("workload"):
            raise ConfigurationError(f"{source}: missing [workload] section")
        values.update(parser["workload"])
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = WorkloadConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()


class ZipfSampler:
    """Ranks ``0..n-1`` with ``P(r) ∝ 1 / (r + 1) ** theta`` via a CDF table and bisection."""

    def __init__(self, theta: float, n: int) -> None:
        if n < 1:
            raise ValueError("n must be >= 1")
        if theta < 0:
            raise ValueError("theta must be >= 0")
        self.theta = theta
        self.n = n
        weights = [1.0 / (r ** theta) for r in range(1, n + 1)]
        total = sum(weights)
        self.pmf = [w / total for w in weights]
        self.cdf = list(accumulate(self.pmf))
        self.cdf[-1] = 1.0

    def sample(self, rng: random.Random) -> int:
        return min(bisect.bisect_right(self.cdf, rng.random()), self.n - 1)


_samplers: dict[tuple[float, int], ZipfSampler] = {}


def zipf_sample(theta: float, n: int, rng: random.Random) -> int:
    sampler = _samplers.get((theta, n))
    if sampler is None:
        sampler = _samplers[(theta, n)] = ZipfSampler(theta, n)
    return sampler.sample(rng)


class OrderGenerator:
    """Per-worker order stream; deterministic for a given seed and worker id."""

    def __init__(self, workload: WorkloadConfig, params: LoadParams, worker_id: int) -> None:
        self.workload = workload
        self.params = params
        self.worker_id = worker_id
        self.rng = random.Random(workload.seed + worker_id)
        self.cart = worker_id % params.carts
        self.customers = params.cart_customers(self.cart)
        self.sampler = None if workload.zipf is None else ZipfSampler(workload.zipf, params.sections)
        if workload.disjoint_items:
            self.items = range(worker_id, params.items_per_section, workload.workers)
        else:
            self.items = range(params.items_per_section)

    def sections(self) -> list[int]:
        w = self.workload
        if w.section_choice == "fixed":
            return list(range(w.sections))
        return sorted(self.rng.sample(range(self.params.sections), w.sections))

    def next_order(self) -> tuple[int, tuple[tuple[int, int, int], ...]]:
        """Return ``(customer_id, ((section, item_id, qty), ...))``."""
        rng = self.rng
        w = self.workload
        customer = self.customers[rng.randrange(len(self.customers))]
        per_section: dict[int, int] = {}
        if self.sampler is not None:
            for _ in range(w.order_size):
                s = self.sampler.sample(rng)
                per_section[s] = per_section.get(s, 0) + 1
        elif w.order_size:
            each = w.order_size // w.sections
            per_section = {s: each for s in self.sections()}
        lines = []
        for s in sorted(per_section):
            for item in sorted(rng.sample(self.items, per_section[s])):
                lines.append((s, item, rng.randint(1, 5)))
        return customer, tuple(lines)
