"""Application-facing reactor model.

A reactor type bundles relation schemas with named functions.  Function
bodies receive a :class:`ReactorContext` bound to the executing
(sub-)transaction and use it as their record manager and to call functions
on other reactors::

    def transfer(self, to, amount):
        (balance,) = self.read("account", 0)
        self.write("account", 0, (balance - amount,))
        return self.call(to, "deposit", amount)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable

from . import occ
from .errors import ConfigurationError

if TYPE_CHECKING:
    from .runtime import Future, Runtime, TransactionTask


@dataclass(frozen=True)
class Relation:
    name: str
    key: tuple[str, ...]
    columns: tuple[str, ...] = ()


@dataclass
class ReactorType:
    name: str
    relations: list[Relation] = field(default_factory=list)
    functions: dict[str, Callable[..., Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [r.name for r in self.relations]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigurationError(f"reactor type {self.name!r}: duplicate relations {dupes}")


@dataclass(frozen=True)
class ReactorHandle:
    reactor_name: str
    type_name: str


class ReactorContext:
    """The ``self`` argument of a reactor function body."""

    __slots__ = ("_runtime", "_task", "_tables")

    def __init__(self, runtime: Runtime, task: TransactionTask) -> None:
        self._runtime = runtime
        self._task = task
        self._tables = task.container.tables

    @property
    def name(self) -> str:
        return self._task.reactor

    @property
    def tid(self) -> int:
        return self._task.tid

    def _table(self, relation: str):
        try:
            return self._tables[(self._task.reactor, relation)]
        except KeyError:
            raise ConfigurationError(
                f"reactor {self._task.reactor!r} has no relation {relation!r}") from None

    def read(self, relation: str, key: Any) -> Any:
        return occ.ctx_read(self._task.db_ctx, self._table(relation), key)

    def scan(self, relation: str, lo: Any, hi: Any, limit: int | None = None,
             reverse: bool = False) -> list[tuple[Any, Any]]:
        return occ.ctx_scan(self._task.db_ctx, self._table(relation), lo, hi, limit, reverse)

    def write(self, relation: str, key: Any, value: Any) -> None:
        occ.ctx_write(self._task.db_ctx, self._table(relation), key, value)

    def insert(self, relation: str, key: Any, value: Any) -> None:
        occ.ctx_insert(self._task.db_ctx, self._table(relation), key, value)

    def call(self, reactor: str, fn: str, *args: Any) -> Future:
        """``fn(args) on reactor``: returns a future, already resolved for co-located reactors."""
        task = self._task
        return self._runtime.exec_call(task, fn, reactor, args, task.container)


def declare_type(runtime: Runtime, rtype: ReactorType) -> None:
    runtime.declare_type(rtype)


def create_reactor(runtime: Runtime, type_name: str, reactor_name: str) -> ReactorHandle:
    return runtime.create_reactor(type_name, reactor_name)


def submit_root(runtime: Runtime, fn_name: str, args: tuple, reactor_name: str) -> Future:
    return runtime.submit_root(reactor_name, fn_name, *args)
