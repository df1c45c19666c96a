from __future__ import annotations

import os
import random

import pytest
from hypothesis import HealthCheck, settings

from couplesim.core import GAS_UNIT, Guard, Step, Transaction, WriteCell

settings.register_profile(
    "default", max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", 60)), deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def unit_tx(tid: int, gas: int = GAS_UNIT, est: int | None = None, price: int = 1, sender: int | None = None,
            **kw) -> Transaction:
    """Single unconditional step of ``gas`` micro-units."""
    s = 100 + tid if sender is None else sender
    return Transaction(
        id=tid, sender=s, price=price, est=gas if est is None else est, steps=(Step(gas),),
        declared_reads=frozenset({s}), declared_writes=frozenset({s}), **kw,
    )


def cell_tx(tid: int, sender: int, gas: int, reads: set[int], writes: dict[int, int], price: int = 1) -> Transaction:
    """Reads ``reads`` through always-true guards, then writes ``writes``."""
    steps = [Step(0, Guard(a, ">=", -10**18)) for a in sorted(reads)]
    steps.append(Step(gas, None, tuple(WriteCell(a, v) for a, v in sorted(writes.items()))))
    return Transaction(
        id=tid, sender=sender, price=price, est=gas, steps=tuple(steps),
        declared_reads=frozenset(reads) | {sender}, declared_writes=frozenset(writes) | {sender},
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240601)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], "PASS" if report.passed else "FAIL", ""))
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.failed:
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], "FAIL", "(setup error)"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, note in _ACCEPTANCE:
        terminalreporter.write_line(f"{verdict}  {name} {note}".rstrip())
