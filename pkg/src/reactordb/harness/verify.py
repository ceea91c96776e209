"""Serial-replay oracle for committed histories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from ..commit import TraceEntry
from ..deployment import serial_deployment
from ..runtime import Runtime
from ..smartmart import LoadParams, build, check_invariants


@dataclass
class VerifyReport:
    passed: bool
    replayed: int
    mismatches: list[str] = field(default_factory=list)
    first_divergence: tuple[tuple[str, str], Any] | None = None
    invariant_violations: list[str] = field(default_factory=list)

    def summary(self) -> str:
        if self.passed:
            return f"serializability: PASS ({self.replayed} committed transactions replayed)"
        lines = [f"serializability: FAIL after replaying {self.replayed} transactions"]
        if self.first_divergence is not None:
            table, key = self.first_divergence
            lines.append(f"  first divergent row: table {table[0]}.{table[1]} key {key!r}")
        lines += [f"  {m}" for m in self.mismatches[:5]]
        lines += [f"  invariant: {v}" for v in self.invariant_violations[:5]]
        return "\n".join(lines)


def _first_divergence(expected: dict, actual: dict) -> tuple[tuple[str, str], Any] | None:
    for table in sorted(set(expected) | set(actual)):
        exp = dict(expected.get(table, ()))
        act = dict(actual.get(table, ()))
        if exp == act:
            continue
        for key in sorted(set(exp) | set(act)):
            if exp.get(key, _MISSING) != act.get(key, _MISSING):
                return table, key
    return None


_MISSING = object()


def replay(trace: Iterable[TraceEntry], params: LoadParams) -> tuple[Runtime, list[str]]:
    """Re-execute committed transactions one at a time, in commit order, on a fresh database."""
    rt = Runtime(serial_deployment())
    build(rt, params)
    mismatches = []
    for entry in sorted(trace, key=lambda e: e.commit_tid):
        res = rt.run_inline(entry.reactor, entry.fn, *entry.args)
        if not res.committed:
            mismatches.append(f"tid {entry.commit_tid} {entry.reactor}.{entry.fn} failed on replay: "
                              f"{res.error!r}")
        elif res.value != entry.value:
            mismatches.append(f"tid {entry.commit_tid} {entry.reactor}.{entry.fn} returned "
                              f"{res.value!r}, originally {entry.value!r}")
    return rt, mismatches


def verify_serializability(trace: list[TraceEntry], params: LoadParams, final_state: dict,
                           record_history: bool = True) -> VerifyReport:
    """Pass iff the commit-order serial replay reproduces every result and the final state."""
    rt, mismatches = replay(trace, params)
    divergence = _first_divergence(rt.snapshot(), final_state)
    checkouts = [e.value[1] for e in trace if e.fn == "checkout"]
    violations = check_invariants(params, final_state, checkouts, record_history)
    passed = not mismatches and divergence is None and not violations
    return VerifyReport(passed, len(trace), mismatches, divergence, violations)
