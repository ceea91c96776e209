"""SmartMart: an IoT supermarket benchmark on the reactor model.

Five reactor types over eight relations::

    Store          sections(section_id -> reactor name)
    Cart           cart_items(line -> CartHeader | CartLine)
    Customer       profile(customer_id -> group_id, visit_count), visits(visit_no -> total)
    Group_Manager  group_discounts((section, item_id) -> rate)
    Store_Section  inventory(item_id -> name, price, stock, next_seq),
                   purchase_history((item_id, seq) -> qty),
                   section_stats(item_id -> ref_demand, loaded_history)

Every value a transaction writes is derived from database state and its
arguments, so replaying committed transactions serially reproduces the state.
"""

from __future__ import annotations

import functools
import math
import random
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, TransactionFailure
from .reactor import ReactorContext, ReactorType, Relation

MAX_VARIABLE_DISCOUNT = 0.30
HEADER = 0


class InsufficientStock(TransactionFailure):
    pass


class UnknownItem(TransactionFailure):
    pass


class CartHeader(NamedTuple):
    session: int
    customer_id: int
    n_lines: int
    allocated: int


class CartLine(NamedTuple):
    session: int
    section: int
    item_id: int
    qty: int
    unit_price: float
    fixed_discount: float


class Product(NamedTuple):
    name: str
    price: float
    stock: int
    next_seq: int


class Profile(NamedTuple):
    group_id: int
    visit_count: int


class SectionStats(NamedTuple):
    ref_demand: float
    loaded_history: int


def cart_name(i: int) -> str:
    return f"cart_{i}"


def customer_name(c: int) -> str:
    return f"customer_{c}"


def group_manager_name(g: int) -> str:
    return f"group_manager_{g}"


def section_name(s: int) -> str:
    return f"section_{s}"


# -- trend prediction ---------------------------------------------------------------

def predict_trend(window: Sequence[float]) -> float:
    """Mean plus population standard deviation of the window; 0 for no history."""
    n = len(window)
    if n == 0:
        return 0.0
    mu = math.fsum(window) / n
    var = math.fsum((x - mu) * (x - mu) for x in window) / n
    return mu + math.sqrt(var)


def variable_discount(pred: float, ref: float) -> float:
    """Discount slow movers: full rate when nothing is predicted, none at or above reference demand."""
    if ref <= 0:
        return 0.0
    return MAX_VARIABLE_DISCOUNT * (1.0 - min(1.0, pred / ref))


def fixed_discount(group_id: int, item_id: int) -> float:
    return ((group_id + item_id) % 10) / 100


# -- artificial per-section compute ------------------------------------------------

class DelayLoop:
    """Fixed amount of pseudo-random number generation, sized once per process.

    ``spin(ms)`` always does the same number of draws for the same ``ms``; the
    wall clock is only consulted during calibration.
    """

    CHUNK = 4096

    def __init__(self, seed: int = 0x5EED) -> None:
        self._seed = seed
        self._chunks_per_ms: float | None = None

    def calibrate(self, target_ms: float = 50.0) -> float:
        rng = np.random.Generator(np.random.PCG64(self._seed))
        rng.random(self.CHUNK)
        n = 16
        while True:
            t0 = time.perf_counter()
            for _ in range(n):
                rng.random(self.CHUNK)
            ms = (time.perf_counter() - t0) * 1e3
            if ms >= target_ms / 4:
                break
            n *= 2
        self._chunks_per_ms = n / ms
        return self._chunks_per_ms

    def chunks_for(self, ms: float) -> int:
        if self._chunks_per_ms is None:
            self.calibrate()
        return max(1, round(ms * self._chunks_per_ms))

    def spin(self, ms: float) -> float:
        if ms <= 0:
            return 0.0
        rng = np.random.Generator(np.random.PCG64(self._seed))
        acc = 0.0
        for _ in range(self.chunks_for(ms)):
            acc += rng.random(self.CHUNK)[0]
        return acc


DELAY = DelayLoop()


# -- reactor functions -------------------------------------------------------------

def store_list_sections(self: ReactorContext) -> tuple[str, ...]:
    return tuple(name for _sid, name in self.scan("sections", 0, 1 << 30))


def customer_get_group(self: ReactorContext, customer_id: int) -> int:
    profile = self.read("profile", customer_id)
    if profile is None:
        raise TransactionFailure(f"unknown customer {customer_id}")
    return profile.group_id


def customer_record_visit(self: ReactorContext, customer_id: int, total: float) -> int:
    profile = self.read("profile", customer_id)
    if profile is None:
        raise TransactionFailure(f"unknown customer {customer_id}")
    visit_no = profile.visit_count + 1
    self.insert("visits", visit_no, total)
    self.write("profile", customer_id, Profile(profile.group_id, visit_no))
    return visit_no


def group_get_discounts(self: ReactorContext, keys: tuple[tuple[int, int], ...]) -> tuple[float, ...]:
    out = []
    for key in keys:
        rate = self.read("group_discounts", key)
        if rate is None:
            raise UnknownItem(f"{self.name}: no discount for section/item {key}")
        out.append(rate)
    return tuple(out)


def section_get_price(self: ReactorContext, item_id: int) -> float:
    product = self.read("inventory", item_id)
    if product is None:
        raise UnknownItem(f"{self.name}: unknown item {item_id}")
    return product.price


def section_checkout_items(self: ReactorContext, items: tuple[tuple[int, int], ...], window: int,
                           delay_ms: float = 0.0, record_history: bool = True) -> tuple[float, ...]:
    """Sell ``(item_id, qty)`` pairs; returns each item's variable discount."""
    if delay_ms > 0:
        DELAY.spin(delay_ms)
    out = []
    for item_id, qty in items:
        product = self.read("inventory", item_id)
        if product is None:
            raise UnknownItem(f"{self.name}: unknown item {item_id}")
        if product.stock < qty:
            raise InsufficientStock(f"{self.name}: item {item_id} has {product.stock}, wants {qty}")
        if delay_ms > 0 or window <= 0 or product.next_seq == 0:
            recent: list[int] = []
        else:
            rows = self.scan("purchase_history", (item_id, 0), (item_id, product.next_seq - 1),
                             limit=window, reverse=True)
            recent = [q for _key, q in rows]
        stats = self.read("section_stats", item_id)
        out.append(variable_discount(predict_trend(recent), stats.ref_demand))
        next_seq = product.next_seq
        if record_history:
            self.insert("purchase_history", (item_id, next_seq), qty)
            next_seq += 1
        self.write("inventory", item_id, product._replace(stock=product.stock - qty, next_seq=next_seq))
    return tuple(out)


def cart_add_items(self: ReactorContext, customer_id: int,
                   items: tuple[tuple[int, int, int], ...], reset: bool = False) -> float:
    """Add ``(section, item_id, qty)`` lines priced and discounted for the customer's group.

    ``reset`` drops lines left over from an earlier, unfinished interaction.
    """
    group = self.call(customer_name(customer_id), "get_group", customer_id).result()
    discounts = self.call(group_manager_name(group), "get_discounts",
                          tuple((s, i) for s, i, _q in items)).result()
    price_futs = [self.call(section_name(s), "get_price", i) for s, i, _q in items]
    prices = [f.result() for f in price_futs]

    header = self.read("cart_items", HEADER)
    line_no = 0 if reset else header.n_lines
    total = 0.0
    for (s, i, q), price, disc in zip(items, prices, discounts):
        line_no += 1
        row = CartLine(header.session, s, i, q, price, disc)
        if line_no <= header.allocated:
            self.write("cart_items", line_no, row)
        else:
            self.insert("cart_items", line_no, row)
        total += q * price
    self.write("cart_items", HEADER, CartHeader(header.session, customer_id, line_no,
                                                max(header.allocated, line_no)))
    return total


def cart_checkout(self: ReactorContext, window: int, delay_ms: float = 0.0,
                  record_history: bool = True) -> tuple[float, tuple[tuple[int, int, int], ...]]:
    """Buy the cart's lines and start a new session; returns ``(total, sold lines)``."""
    header = self.read("cart_items", HEADER)
    lines = [self.read("cart_items", n) for n in range(1, header.n_lines + 1)]
    by_section: dict[int, list[int]] = defaultdict(list)
    for idx, line in enumerate(lines):
        by_section[line.section].append(idx)
    # fan out to every section before waiting on any of them
    futs = []
    for s in sorted(by_section):
        pairs = tuple((lines[i].item_id, lines[i].qty) for i in by_section[s])
        futs.append((s, self.call(section_name(s), "checkout_items", pairs, window, delay_ms,
                                  record_history)))
    variable = [0.0] * len(lines)
    for s, fut in futs:
        for idx, rate in zip(by_section[s], fut.result()):
            variable[idx] = rate
    total = 0.0
    for line, var in zip(lines, variable):
        total += line.qty * line.unit_price * (1.0 - (line.fixed_discount + var))
    if header.customer_id >= 0:
        self.call(customer_name(header.customer_id), "record_visit", header.customer_id,
                  total).result()
    self.write("cart_items", HEADER, CartHeader(header.session + 1, header.customer_id, 0,
                                                header.allocated))
    return total, tuple((ln.section, ln.item_id, ln.qty) for ln in lines)


def schema() -> list[ReactorType]:
    return [
        ReactorType("Store", [Relation("sections", ("section_id",), ("reactor",))],
                    {"list_sections": store_list_sections}),
        ReactorType("Cart", [Relation("cart_items", ("line",), CartLine._fields)],
                    {"add_items": cart_add_items, "checkout": cart_checkout}),
        ReactorType("Customer", [Relation("profile", ("customer_id",), Profile._fields),
                                 Relation("visits", ("visit_no",), ("total",))],
                    {"get_group": customer_get_group, "record_visit": customer_record_visit}),
        ReactorType("Group_Manager", [Relation("group_discounts", ("section", "item_id"), ("rate",))],
                    {"get_discounts": group_get_discounts}),
        ReactorType("Store_Section", [Relation("inventory", ("item_id",), Product._fields),
                                      Relation("purchase_history", ("item_id", "seq"), ("qty",)),
                                      Relation("section_stats", ("item_id",), SectionStats._fields)],
                    {"get_price": section_get_price, "checkout_items": section_checkout_items}),
    ]


# -- population ------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadParams:
    sections: int = 4
    items_per_section: int = 1000
    history_per_item: int = 60
    carts: int = 4
    group_managers: int = 4
    customers_per_cart: int = 8
    initial_stock: int = 10_000
    seed: int = 42

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if name != "seed" and value <= 0:
                raise ConfigurationError(f"load parameter {name!r} must be > 0 (got {value})")

    @classmethod
    def desk(cls, **overrides: Any) -> LoadParams:
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides: Any) -> LoadParams:
        base = dict(sections=8, items_per_section=10_000, history_per_item=300, carts=8,
                    group_managers=10, customers_per_cart=30, initial_stock=1_000_000)
        base.update(overrides)
        return cls(**base)

    @property
    def customers(self) -> int:
        return self.carts * self.customers_per_cart

    def cart_customers(self, cart: int) -> range:
        return range(cart * self.customers_per_cart, (cart + 1) * self.customers_per_cart)


def reactor_names(params: LoadParams) -> list[tuple[str, str]]:
    """``(type, reactor)`` pairs in creation order."""
    out = [("Store", "store")]
    out += [("Store_Section", section_name(s)) for s in range(params.sections)]
    out += [("Group_Manager", group_manager_name(g)) for g in range(params.group_managers)]
    out += [("Cart", cart_name(i)) for i in range(params.carts)]
    out += [("Customer", customer_name(c)) for c in range(params.customers)]
    return out


def install_schema(runtime, params: LoadParams) -> None:
    for rtype in schema():
        runtime.declare_type(rtype)
    for type_name, reactor in reactor_names(params):
        runtime.create_reactor(type_name, reactor)


@functools.lru_cache(maxsize=4)
def generate(params: LoadParams) -> dict[tuple[str, str], tuple[tuple[Any, Any], ...]]:
    """Deterministic initial rows keyed by ``(reactor, relation)``."""
    rng = random.Random(params.seed)
    rows: dict[tuple[str, str], list] = {}
    rows[("store", "sections")] = [(s, section_name(s)) for s in range(params.sections)]
    for s in range(params.sections):
        inventory, history, stats = [], [], []
        h = params.history_per_item
        for i in range(params.items_per_section):
            price = round(rng.uniform(1.0, 100.0), 2)
            qtys = [rng.randint(1, 10) for _ in range(h)]
            inventory.append((i, Product(f"s{s}-item{i}", price, params.initial_stock, h)))
            history.extend(((i, seq), q) for seq, q in enumerate(qtys))
            stats.append((i, SectionStats(sum(qtys) / h, h)))
        name = section_name(s)
        rows[(name, "inventory")] = inventory
        rows[(name, "purchase_history")] = history
        rows[(name, "section_stats")] = stats
    for g in range(params.group_managers):
        rows[(group_manager_name(g), "group_discounts")] = [
            ((s, i), fixed_discount(g, i))
            for s in range(params.sections) for i in range(params.items_per_section)]
    for c in range(params.customers):
        rows[(customer_name(c), "profile")] = [(c, Profile(rng.randrange(params.group_managers), 0))]
        rows[(customer_name(c), "visits")] = []
    for i in range(params.carts):
        rows[(cart_name(i), "cart_items")] = [(HEADER, CartHeader(0, -1, 0, 0))]
    return {k: tuple(v) for k, v in rows.items()}


def load(runtime, params: LoadParams) -> None:
    """Populate an already-installed schema from the seeded generator."""
    for (reactor, relation), items in generate(params).items():
        runtime.table(reactor, relation).bulk_load(items)


def build(runtime, params: LoadParams) -> None:
    install_schema(runtime, params)
    load(runtime, params)


# -- invariants ---------------------------------------------------------------------------

Snapshot = dict[tuple[str, str], list[tuple[Any, Any]]]


def check_invariants(params: LoadParams, final: Snapshot,
                     checkouts: Iterable[tuple[tuple[int, int, int], ...]],
                     record_history: bool = True) -> list[str]:
    """Conservation checks of a final state against the committed checkouts.

    ``checkouts`` holds the sold-lines tuple of every committed checkout.
    Returns human-readable violations (empty when all hold).
    """
    sold: Counter = Counter()
    sales: Counter = Counter()
    for lines in checkouts:
        for s, i, q in lines:
            sold[(s, i)] += q
            sales[(s, i)] += 1
    problems = []
    h = params.history_per_item
    for s in range(params.sections):
        name = section_name(s)
        history: Counter = Counter(i for (i, _seq), _q in final[(name, "purchase_history")])
        for i, product in final[(name, "inventory")]:
            expect = params.initial_stock - sold[(s, i)]
            if product.stock != expect:
                problems.append(f"{name} item {i}: stock {product.stock}, expected {expect}")
            rows = history.get(i, 0)
            expect_rows = h + (sales[(s, i)] if record_history else 0)
            if rows != expect_rows or (record_history and product.next_seq != rows):
                problems.append(f"{name} item {i}: {rows} history rows (next_seq {product.next_seq}),"
                                f" expected {expect_rows}")
    return problems
