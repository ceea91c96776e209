from __future__ import annotations

import pytest

from reactordb import ReactorType, Relation, Runtime
from reactordb.deployment import ContainerSpec, DeploymentConfig, Placement


def acct_balance(self):
    return self.read("acct", 0)[0]


def acct_deposit(self, amount):
    (bal,) = self.read("acct", 0)
    self.write("acct", 0, (bal + amount,))
    return bal + amount


def acct_transfer(self, to, amount):
    (bal,) = self.read("acct", 0)
    if bal < amount:
        raise ValueError("insufficient funds")
    self.write("acct", 0, (bal - amount,))
    return self.call(to, "deposit", amount).result()


def acct_fan_out(self, targets, amount):
    futs = [self.call(t, "deposit", amount) for t in targets]
    return [f.result() for f in futs]


ACCOUNT = ReactorType("Account", [Relation("acct", ("k",), ("balance",))],
                      {"balance": acct_balance, "deposit": acct_deposit,
                       "transfer": acct_transfer, "fan_out": acct_fan_out})


def bank(containers: int, accounts: int, executors: int = 1, balance: int = 100,
         pool_size: int = 4, active_limit: int = 1, start: bool = True) -> Runtime:
    """Accounts ``a0..`` spread round-robin over ``containers`` containers."""
    specs = [ContainerSpec(c, executors, "affinity", pool_size, active_limit) for c in range(containers)]
    placements = [Placement(f"a{i}", i % containers, tuple(range(executors))) for i in range(accounts)]
    rt = Runtime(DeploymentConfig("bank", specs, placements))
    rt.declare_type(ACCOUNT)
    for i in range(accounts):
        rt.create_reactor("Account", f"a{i}")
        rt.table(f"a{i}", "acct").bulk_load([(0, (balance,))])
    if start:
        rt.start()
    return rt


def total_balance(rt: Runtime, accounts: int) -> int:
    return sum(rt.table(f"a{i}", "acct").get(0)[0][0] for i in range(accounts))


@pytest.fixture
def bank_rt():
    rt = bank(3, 6)
    yield rt
    rt.shutdown()


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record one ``criterion N: PASS/FAIL ...`` line, printed in the terminal summary."""
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
