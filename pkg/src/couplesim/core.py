"""Domain types and the guarded-step transaction language.

Gas is exact fixed point: every gas quantity is an ``int`` counted in
micro-units, with ``GAS_UNIT`` (one million) standing for a full
transaction's worth of execution resources. State is a map from integer
addresses to integer cells; addresses below the account count are balance
cells (account ``k`` keeps its balance at address ``k``).
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Union

GAS_UNIT = 1_000_000
MAX_GUARDS = 20

_COMPARATORS: dict[str, Callable[[int, int], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


def gas_from(value: Union[str, int, float, Fraction]) -> int:
    """Convert a gas quantity in whole units (``"0.25"``, ``1``) to micro-units.

    Raises ``ValueError`` when the value is not representable exactly.
    """
    if isinstance(value, float):
        value = repr(value)
    micro = Fraction(value) * GAS_UNIT
    if micro.denominator != 1:
        raise ValueError(f"gas value {value!r} is finer than one micro-unit")
    return int(micro)


def gas_to_fraction(micro: int) -> Fraction:
    return Fraction(micro, GAS_UNIT)


@dataclass(frozen=True, slots=True)
class Guard:
    addr: int
    op: str
    value: int

    def __post_init__(self) -> None:
        if self.op not in _COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")

    def holds(self, cell_value: int) -> bool:
        return _COMPARATORS[self.op](cell_value, self.value)

    def __str__(self) -> str:
        return f"{self.addr}{self.op}{self.value}"


@dataclass(frozen=True, slots=True)
class WriteCell:
    addr: int
    value: int


@dataclass(frozen=True, slots=True)
class Transfer:
    """Move ``amount`` from the sender's balance to account ``to``.

    The moved amount is clamped to the sender's balance at that point.
    """

    to: int
    amount: int


Effect = Union[WriteCell, Transfer]


@dataclass(frozen=True, slots=True)
class Step:
    """One program step.

    ``gas_cost`` is charged whenever the step is reached. Effects run only if
    the guard is absent or holds; a step with ``halt`` set ends the program
    after its effects run (so a guarded halting step is an early exit).
    """

    gas_cost: int
    guard: Guard | None = None
    effects: tuple[Effect, ...] = ()
    halt: bool = False


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int
    sender: int
    price: int
    est: int
    steps: tuple[Step, ...] = ()
    declared_reads: frozenset[int] = frozenset()
    declared_writes: frozenset[int] = frozenset()
    submit_round: int = 0
    origin: str = "honest"


class StateSnapshot:
    """Immutable address -> value map. Missing addresses read as 0."""

    __slots__ = ("_cells", "settled_round")

    def __init__(self, cells: Mapping[int, int] | None = None, settled_round: int = -1):
        clean = {a: v for a, v in (cells or {}).items() if v != 0}
        self._cells = MappingProxyType(clean)
        self.settled_round = settled_round

    @property
    def cells(self) -> Mapping[int, int]:
        return self._cells

    def get(self, addr: int) -> int:
        return self._cells.get(addr, 0)

    def __getitem__(self, addr: int) -> int:
        return self._cells.get(addr, 0)

    def updated(self, delta: Mapping[int, int], settled_round: int | None = None) -> "StateSnapshot":
        cells = dict(self._cells)
        cells.update(delta)
        return StateSnapshot(cells, self.settled_round if settled_round is None else settled_round)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateSnapshot):
            return NotImplemented
        return self._cells == other._cells and self.settled_round == other.settled_round

    def same_cells(self, other: "StateSnapshot") -> bool:
        return self._cells == other._cells

    def __repr__(self) -> str:
        return f"StateSnapshot({dict(self._cells)!r}, settled_round={self.settled_round})"


@dataclass(frozen=True, slots=True)
class Block:
    round: int
    proposer: int
    txs: tuple[Transaction, ...] = ()
    # Per-transaction access declarations and predicted gas; partial mode only.
    declared_reads: Mapping[int, frozenset[int]] | None = None
    declared_writes: Mapping[int, frozenset[int]] | None = None
    predicted_gas: Mapping[int, int] | None = None
    flags: frozenset[str] = frozenset()

    @property
    def declared_write_union(self) -> frozenset[int]:
        if self.declared_writes is None:
            return frozenset()
        return frozenset().union(*self.declared_writes.values())

    @property
    def est_total(self) -> int:
        return sum(tx.est for tx in self.txs)

    def tx_ids(self) -> tuple[int, ...]:
        return tuple(tx.id for tx in self.txs)


@dataclass(frozen=True)
class Mempool:
    """Pending transactions keyed by id; ``advance`` applies the round update."""

    pending: Mapping[int, Transaction] = field(default_factory=dict)

    @classmethod
    def of(cls, txs: Iterable[Transaction]) -> "Mempool":
        return cls(MappingProxyType({tx.id: tx for tx in txs}))

    def __len__(self) -> int:
        return len(self.pending)

    def __iter__(self):
        return iter(self.txs())

    def __contains__(self, tx_id: int) -> bool:
        return tx_id in self.pending

    def txs(self) -> tuple[Transaction, ...]:
        return tuple(self.pending[k] for k in sorted(self.pending))

    def advance(self, block: Block | Iterable[Transaction], new_txs: Iterable[Transaction]) -> "Mempool":
        """``(M \\ b) ∪ new``."""
        included = block.txs if isinstance(block, Block) else tuple(block)
        pending = dict(self.pending)
        for tx in included:
            pending.pop(tx.id, None)
        for tx in new_txs:
            if tx.id in pending:
                raise ValueError(f"duplicate transaction id {tx.id}")
            pending[tx.id] = tx
        return Mempool(MappingProxyType(pending))


# -- interpretation -----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Trace:
    """Result of walking a program against a state (no charging applied)."""

    gas: int
    reads: frozenset[int]
    writes: frozenset[int]
    delta: Mapping[int, int]


def run_program(tx: Transaction, lookup: Callable[[int], int]) -> Trace:
    """Walk ``tx``'s steps against ``lookup`` and return gas, access sets, delta.

    Effects of earlier steps are visible to later guards. The sender's balance
    cell is always in both access sets because charging reads and writes it.
    """
    local: dict[int, int] = {}

    def read(addr: int) -> int:
        return local[addr] if addr in local else lookup(addr)

    gas = 0
    reads = {tx.sender}
    writes = {tx.sender}
    for step in tx.steps:
        gas += step.gas_cost
        if step.guard is not None:
            reads.add(step.guard.addr)
            if not step.guard.holds(read(step.guard.addr)):
                continue
        for eff in step.effects:
            if isinstance(eff, WriteCell):
                local[eff.addr] = eff.value
                writes.add(eff.addr)
            else:
                moved = min(eff.amount, max(read(tx.sender), 0))
                local[tx.sender] = read(tx.sender) - moved
                local[eff.to] = read(eff.to) + moved
                writes.add(tx.sender)
                writes.add(eff.to)
        if step.halt:
            break
    return Trace(gas, frozenset(reads), frozenset(writes), MappingProxyType(local))


def actual_access_sets(tx: Transaction, st: StateSnapshot) -> tuple[frozenset[int], frozenset[int]]:
    trace = run_program(tx, st.get)
    return trace.reads, trace.writes


def max_path_gas(steps: Iterable[Step]) -> int:
    """Worst-case gas over every combination of guard outcomes.

    Every reached step is charged, and only a halting step can cut the path
    short; a guarded halt may fail, so the worst path runs up to the first
    unguarded halting step.
    """
    total = 0
    for step in steps:
        total += step.gas_cost
        if step.halt and step.guard is None:
            break
    return total


class Verdict(Enum):
    OK = "ok"
    TOO_MANY_GUARDS = "TooManyGuards"
    PATH_GAS_EXCEEDS_ONE = "PathGasExceedsOne"
    ESTIMATE_OUT_OF_RANGE = "EstimateOutOfRange"
    ADDRESS_OUT_OF_BOUNDS = "AddressOutOfBounds"


def _addresses(tx: Transaction) -> Iterable[int]:
    yield tx.sender
    yield from tx.declared_reads
    yield from tx.declared_writes
    for step in tx.steps:
        if step.guard is not None:
            yield step.guard.addr
        for eff in step.effects:
            yield eff.addr if isinstance(eff, WriteCell) else eff.to


def validate_transaction(tx: Transaction, state_size: int) -> Verdict:
    """Return ``Verdict.OK`` or the first violated transaction invariant."""
    if sum(1 for s in tx.steps if s.guard is not None) > MAX_GUARDS:
        return Verdict.TOO_MANY_GUARDS
    if any(s.gas_cost < 0 for s in tx.steps) or max_path_gas(tx.steps) > GAS_UNIT:
        return Verdict.PATH_GAS_EXCEEDS_ONE
    if not 0 <= tx.est <= GAS_UNIT:
        return Verdict.ESTIMATE_OUT_OF_RANGE
    if any(not 0 <= a < state_size for a in _addresses(tx)):
        return Verdict.ADDRESS_OUT_OF_BOUNDS
    return Verdict.OK


# -- line-oriented text format --------------------------------------------------


def _fmt_set(s: Iterable[int]) -> str:
    items = sorted(s)
    return ",".join(map(str, items)) if items else "-"


def _parse_set(s: str) -> frozenset[int]:
    return frozenset() if s == "-" else frozenset(int(x) for x in s.split(","))


def _fmt_effect(eff: Effect) -> str:
    if isinstance(eff, WriteCell):
        return f"W:{eff.addr}={eff.value}"
    return f"T:{eff.to}={eff.amount}"


def _parse_effect(s: str) -> Effect:
    kind, rest = s.split(":", 1)
    a, v = rest.split("=", 1)
    if kind == "W":
        return WriteCell(int(a), int(v))
    if kind == "T":
        return Transfer(int(a), int(v))
    raise ValueError(f"unknown effect {s!r}")


def _parse_guard(s: str) -> Guard | None:
    if s == "-":
        return None
    for op in ("<=", ">=", "<", ">", "="):
        if op in s:
            a, v = s.split(op, 1)
            return Guard(int(a), op, int(v))
    raise ValueError(f"bad guard {s!r}")


def dump_transactions(txs: Iterable[Transaction]) -> str:
    lines = []
    for tx in txs:
        lines.append("\t".join([
            "TX", str(tx.id), str(tx.sender), str(tx.price), str(tx.est),
            str(tx.submit_round), tx.origin or "-",
            _fmt_set(tx.declared_reads), _fmt_set(tx.declared_writes),
        ]))
        for step in tx.steps:
            effects = ";".join(_fmt_effect(e) for e in step.effects) or "-"
            guard = str(step.guard) if step.guard is not None else "-"
            lines.append("\t".join(["STEP", str(step.gas_cost), str(int(step.halt)), guard, effects]))
    return "".join(line + "\n" for line in lines)


def load_transactions(text: str) -> list[Transaction]:
    out: list[Transaction] = []
    head: list[str] | None = None
    steps: list[Step] = []

    def flush() -> None:
        if head is None:
            return
        _, tid, sender, price, est, submit, origin, reads, writes = head
        out.append(Transaction(
            id=int(tid), sender=int(sender), price=int(price), est=int(est),
            steps=tuple(steps), declared_reads=_parse_set(reads),
            declared_writes=_parse_set(writes), submit_round=int(submit),
            origin="" if origin == "-" else origin,
        ))

    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "TX" and len(fields) == 9:
            flush()
            head, steps = fields, []
        elif fields[0] == "STEP" and len(fields) == 5 and head is not None:
            _, gas, halt, guard, effects = fields
            effs = () if effects == "-" else tuple(_parse_effect(e) for e in effects.split(";"))
            steps.append(Step(int(gas), _parse_guard(guard), effs, halt == "1"))
        else:
            raise ValueError(f"line {lineno}: malformed record {line!r}")
    flush()
    return out


def dump_state(st: StateSnapshot) -> str:
    lines = [f"STATE\t{st.settled_round}"]
    lines += [f"CELL\t{a}\t{st.cells[a]}" for a in sorted(st.cells)]
    return "".join(line + "\n" for line in lines)


def load_state(text: str) -> StateSnapshot:
    settled = -1
    cells: dict[int, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "STATE" and len(fields) == 2:
            settled = int(fields[1])
        elif fields[0] == "CELL" and len(fields) == 3:
            cells[int(fields[1])] = int(fields[2])
        else:
            raise ValueError(f"line {lineno}: malformed record {line!r}")
    return StateSnapshot(cells, settled)
