"""Declarative deployments: containers, executors, and the reactor placement map."""

from __future__ import annotations

import configparser
import fnmatch
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

ROUTERS = ("affinity", "round_robin")


@dataclass
class ContainerSpec:
    id: int
    executors: int
    router: str = "affinity"
    pool_size: int = 4
    active_limit: int = 1
    core_ids: tuple[int, ...] | None = None

    def validate(self) -> None:
        where = f"container {self.id}"
        if self.executors < 1:
            raise ConfigurationError(f"{where}: 'executors' must be >= 1 (got {self.executors})")
        if self.router not in ROUTERS:
            raise ConfigurationError(f"{where}: 'router' must be one of {ROUTERS} (got {self.router!r})")
        if self.pool_size < 1:
            raise ConfigurationError(f"{where}: 'pool_size' must be >= 1 (got {self.pool_size})")
        if not 1 <= self.active_limit <= self.pool_size:
            raise ConfigurationError(
                f"{where}: 'active_limit' must be in [1, pool_size] (got {self.active_limit})")
        if self.core_ids is not None and len(self.core_ids) != self.executors:
            raise ConfigurationError(f"{where}: 'cores' needs one core id per executor")


@dataclass
class Placement:
    pattern: str
    container: int
    executors: tuple[int, ...]


@dataclass
class DeploymentConfig:
    """Containers plus an ordered reactor map.

    Map entries are exact reactor names or ``fnmatch`` patterns; exact names
    win over patterns, and a name matched by patterns pointing at two
    different containers is rejected.
    """

    name: str
    containers: list[ContainerSpec]
    reactor_map: list[Placement] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._exact = {p.pattern: p for p in self.reactor_map if not _is_pattern(p.pattern)}
        self._patterns = [p for p in self.reactor_map if _is_pattern(p.pattern)]

    def container(self, cid: int) -> ContainerSpec:
        for c in self.containers:
            if c.id == cid:
                return c
        raise ConfigurationError(f"unknown container {cid}")

    def validate(self) -> None:
        if not self.containers:
            raise ConfigurationError(f"deployment {self.name!r} has no containers")
        ids = [c.id for c in self.containers]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"deployment {self.name!r}: duplicate container ids {ids}")
        for c in self.containers:
            c.validate()
        seen: dict[str, int] = {}
        for p in self.reactor_map:
            if p.pattern in seen and seen[p.pattern] != p.container:
                raise ConfigurationError(
                    f"reactor {p.pattern!r} mapped to two containers ({seen[p.pattern]} and {p.container})")
            seen[p.pattern] = p.container
            spec = self.container(p.container)
            if not p.executors:
                raise ConfigurationError(f"reactor {p.pattern!r}: empty executor list")
            for e in p.executors:
                if not 0 <= e < spec.executors:
                    raise ConfigurationError(
                        f"reactor {p.pattern!r}: executor {e} not in container {p.container}")

    def resolve(self, reactor: str) -> Placement:
        p = self._exact.get(reactor)
        if p is not None:
            return p
        matches = [p for p in self._patterns if fnmatch.fnmatchcase(reactor, p.pattern)]
        if not matches:
            raise ConfigurationError(f"reactor {reactor!r} is not mapped by deployment {self.name!r}")
        containers = {p.container for p in matches}
        if len(containers) > 1:
            raise ConfigurationError(
                f"reactor {reactor!r} mapped to two containers {sorted(containers)}")
        return matches[0]

    def total_executors(self) -> int:
        return sum(c.executors for c in self.containers)


def _is_pattern(name: str) -> bool:
    return any(ch in name for ch in "*?[")


# -- presets ------------------------------------------------------------------------

def sync_deployment(sections: int, carts: int, customers_per_cart: int,
                    executors: int = 8, pool_size: int = 4, active_limit: int = 1) -> DeploymentConfig:
    """One container; each cart and its customers pinned to one executor, the rest everywhere."""
    every = tuple(range(executors))
    placements = [Placement("store", 0, every),
                  Placement("section_*", 0, every),
                  Placement("group_manager_*", 0, every)]
    for cart in range(carts):
        ex = (cart % executors,)
        placements.append(Placement(f"cart_{cart}", 0, ex))
        for c in range(cart * customers_per_cart, (cart + 1) * customers_per_cart):
            placements.append(Placement(f"customer_{c}", 0, ex))
    containers = [ContainerSpec(0, executors, "affinity", pool_size, active_limit)]
    return DeploymentConfig("sync", containers, placements)


def async_deployment(sections: int, carts: int, customers_per_cart: int,
                     executors: int = 8, pool_size: int = 4, active_limit: int = 1) -> DeploymentConfig:
    """Like sync for carts/customers/group managers, plus one single-executor container per section."""
    base = sync_deployment(sections, carts, customers_per_cart, executors, pool_size, active_limit)
    placements = [p for p in base.reactor_map if p.pattern != "section_*"]
    containers = list(base.containers)
    for s in range(sections):
        containers.append(ContainerSpec(s + 1, 1, "affinity", pool_size, active_limit))
        placements.append(Placement(f"section_{s}", s + 1, (0,)))
    return DeploymentConfig("async", containers, placements)


def serial_deployment() -> DeploymentConfig:
    """Single container, single executor, every reactor co-located (used for replay)."""
    return DeploymentConfig("serial", [ContainerSpec(0, 1, "affinity", 1, 1)],
                            [Placement("*", 0, (0,))])


PRESETS = {"sync": sync_deployment, "async": async_deployment}


# -- file format ----------------------------------------------------------------------

def _int_list(text: str, key: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigurationError(f"{key}: cannot parse integer list {text!r}") from None
    return tuple(out)


def parse_deployment_text(text: str, name: str = "file") -> DeploymentConfig:
    """Parse ``[container <id>]`` sections and a ``[reactors]`` section.

    Container keys: ``executors``, ``router``, ``pool_size``, ``active_limit``
    and optional ``cores``.  Reactor lines read ``name = container:executor_list``
    where the list accepts ``0,1,2`` and ``0-7`` forms.
    """
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                       interpolation=None, strict=True)
    parser.optionxform = str  # reactor names are case-sensitive
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigurationError(
            f"reactor {exc.option!r} mapped twice in section [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed deployment file: {exc}") from None

    containers: list[ContainerSpec] = []
    placements: list[Placement] = []
    known = {"executors", "router", "pool_size", "active_limit", "cores"}
    for section in parser.sections():
        words = section.split()
        if words and words[0] == "container":
            if len(words) != 2:
                raise ConfigurationError(f"[{section}]: expected '[container <id>]'")
            try:
                cid = int(words[1])
            except ValueError:
                raise ConfigurationError(f"[{section}]: container id must be an integer") from None
            sec = parser[section]
            for key in sec:
                if key not in known:
                    raise ConfigurationError(f"[{section}]: unknown key {key!r}")
            if "executors" not in sec:
                raise ConfigurationError(f"[{section}]: missing key 'executors'")

            def _int(key: str, default: int) -> int:
                try:
                    return int(sec.get(key, str(default)))
                except ValueError:
                    raise ConfigurationError(f"[{section}]: {key!r} must be an integer") from None

            cores = _int_list(sec["cores"], f"[{section}] cores") if "cores" in sec else None
            containers.append(ContainerSpec(cid, _int("executors", 1), sec.get("router", "affinity"),
                                            _int("pool_size", 4), _int("active_limit", 1), cores))
        elif section == "reactors":
            for reactor, target in parser[section].items():
                cont, sep, execs = target.partition(":")
                if not sep:
                    raise ConfigurationError(f"[reactors] {reactor!r}: expected 'container:executor_list'")
                try:
                    cid = int(cont)
                except ValueError:
                    raise ConfigurationError(f"[reactors] {reactor!r}: bad container id {cont!r}") from None
                placements.append(Placement(reactor, cid, _int_list(execs, f"[reactors] {reactor}")))
        else:
            raise ConfigurationError(f"unknown section [{section}]")
    config = DeploymentConfig(name, containers, placements)
    config.validate()
    return config


def parse_deployment(path: str | os.PathLike) -> DeploymentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read deployment file {p}: {exc.strerror}") from None
    return parse_deployment_text(text, name=p.stem)


def format_deployment(config: DeploymentConfig) -> str:
    lines = []
    for c in config.containers:
        lines += [f"[container {c.id}]", f"executors = {c.executors}", f"router = {c.router}",
                  f"pool_size = {c.pool_size}", f"active_limit = {c.active_limit}"]
        if c.core_ids is not None:
            lines.append("cores = " + ",".join(map(str, c.core_ids)))
        lines.append("")
    lines.append("[reactors]")
    for p in config.reactor_map:
        lines.append(f"{p.pattern} = {p.container}:" + ",".join(map(str, p.executors)))
    return "\n".join(lines) + "\n"
