"""Deterministic execution: gas metering, abort-with-rollback, and charging."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping

from .core import Block, StateSnapshot, Transaction, run_program


class CostKind(Enum):
    CURRENT = "current"
    FULL_ESTIMATE = "full-estimate"


@dataclass(frozen=True, slots=True)
class CostModel:
    kind: CostKind = CostKind.CURRENT
    c_base: int = 0

    @classmethod
    def parse(cls, name: str, c_base: int = 0) -> "CostModel":
        return cls(CostKind(name), c_base)


class Status(Enum):
    EXECUTED = "Executed"
    ABORTED = "Aborted"


@dataclass(frozen=True, slots=True)
class ExecOutcome:
    tx_id: int
    status: Status
    gas_consumed: int
    charged: int
    uncollected: int
    path_gas: int
    delta: Mapping[int, int]
    reads: frozenset[int]
    writes: frozenset[int]
    # "" for a normal run, "estimate" when gas exceeded Est, "misdeclared"
    # when the block's access declaration did not match the execution.
    reason: str = ""

    @property
    def owed(self) -> int:
        return self.charged + self.uncollected


def gas_actual(tx: Transaction, st: StateSnapshot | Mapping[int, int]) -> int:
    """Gas of the guard-resolved path through ``tx`` under ``st``; ignores Est."""
    return run_program(tx, _lookup(st)).gas


def cost(tx: Transaction, st: StateSnapshot | Mapping[int, int], cost_model: CostModel) -> int:
    if cost_model.kind is CostKind.FULL_ESTIMATE:
        return cost_model.c_base + tx.price * tx.est
    return cost_model.c_base + tx.price * gas_actual(tx, st)


def max_charge(tx: Transaction, cost_model: CostModel) -> int:
    """Upper bound on what ``tx`` can be charged under either outcome."""
    return cost_model.c_base + tx.price * tx.est


def _lookup(st: StateSnapshot | Mapping[int, int]) -> Callable[[int], int]:
    if isinstance(st, StateSnapshot):
        return st.get
    return lambda a: st.get(a, 0)


def _execute(tx: Transaction, lookup: Callable[[int], int], cost_model: CostModel) -> ExecOutcome:
    trace = run_program(tx, lookup)
    if trace.gas <= tx.est:
        delta = dict(trace.delta)
        status, consumed = Status.EXECUTED, trace.gas
        owed = cost_model.c_base + tx.price * (tx.est if cost_model.kind is CostKind.FULL_ESTIMATE else trace.gas)
        reason = ""
    else:
        delta = {}
        status, consumed = Status.ABORTED, tx.est
        owed = cost_model.c_base + tx.price * tx.est
        reason = "estimate"
    balance = delta.get(tx.sender, lookup(tx.sender))
    charged = min(owed, max(balance, 0))
    delta[tx.sender] = balance - charged
    return ExecOutcome(
        tx_id=tx.id, status=status, gas_consumed=consumed, charged=charged,
        uncollected=owed - charged, path_gas=trace.gas, delta=delta,
        reads=trace.reads, writes=trace.writes, reason=reason,
    )


def execute_tx(tx: Transaction, st: StateSnapshot | Mapping[int, int], cost_model: CostModel = CostModel()) -> ExecOutcome:
    """Run ``tx`` against ``st``; the outcome's ``delta`` includes the sender debit."""
    return _execute(tx, _lookup(st), cost_model)


def _misdeclared(out: ExecOutcome, block: Block) -> bool:
    if block.declared_writes is None:
        return False
    reads = (block.declared_reads or {}).get(out.tx_id)
    writes = block.declared_writes.get(out.tx_id)
    return writes != out.writes or (reads is not None and reads != out.reads)


def execute_block(
    block: Block,
    st: StateSnapshot,
    cost_model: CostModel = CostModel(),
    verify: bool = False,
) -> tuple[StateSnapshot, list[ExecOutcome]]:
    """Execute ``block`` in order against cumulative intermediate states.

    Charges credit the proposer's balance cell. With ``verify`` set, a
    transaction whose actual access sets differ from the block's declaration
    is aborted without effects or charge (``reason == "misdeclared"``).
    """
    cells = dict(st.cells)
    lookup = lambda a: cells.get(a, 0)  # noqa: E731
    outcomes: list[ExecOutcome] = []
    for tx in block.txs:
        out = _execute(tx, lookup, cost_model)
        if verify and _misdeclared(out, block):
            out = ExecOutcome(
                tx_id=tx.id, status=Status.ABORTED, gas_consumed=tx.est, charged=0,
                uncollected=0, path_gas=out.path_gas, delta={}, reads=out.reads,
                writes=out.writes, reason="misdeclared",
            )
        cells.update(out.delta)
        if out.charged:
            cells[block.proposer] = cells.get(block.proposer, 0) + out.charged
        outcomes.append(out)
    return StateSnapshot(cells, block.round), outcomes


def block_gas(outcomes: Iterable[ExecOutcome]) -> int:
    return sum(o.gas_consumed for o in outcomes)


OUTCOME_FIELDS = ("round", "tx_id", "status", "gas_consumed", "charged", "uncollected")


def outcomes_csv(rows: Iterable[tuple[int, ExecOutcome]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_FIELDS)
    for rnd, o in rows:
        w.writerow((rnd, o.tx_id, o.status.value, o.gas_consumed, o.charged, o.uncollected))
    return buf.getvalue()
