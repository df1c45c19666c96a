"""Round drivers for the coupled, decoupled and partially coupled pipelines.

Consensus is an instantaneous black box: one block is finalized per round.
What differs between modes is which state the builder sees and when each
block's execution completes.

Round ``i`` timeline (ms):

* coupled: slot ``δ = δe + δc + δb``; b_i is built at ``iδ`` and executed by
  ``(i+1)δ``; the next builder sees its result.
* decoupled: rounds advance every ``τ = max(δc, δb)``; b_i executes ``lag``
  rounds after it is finalized and builders never look at state (the greedy
  builder) or look at the last executed state (the knapsack builder).
* partial: rounds advance every ``τ``; execution of b_i starts ``exec_shift``
  after the block broadcast, overlaps consensus, and commits once both are
  done. A builder sees every block whose execution committed by its round
  start; the rest form the pending set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Callable

import numpy as np

from .adversary import (
    Layout,
    WorkloadSpec,
    gen_fund_drain,
    gen_gaslight,
    gen_honest,
    rational_validator_policy,
)
from .builders import BuildContext, Mode, builder_for, reorder_hot
from .core import Block, Mempool, StateSnapshot, Transaction
from .execution import ExecOutcome, Status, execute_block, gas_actual

if TYPE_CHECKING:
    from .config import SimConfig


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class TimingModel:
    delta_e: int = 200
    delta_c: int = 600
    delta_b: int = 200

    def __post_init__(self) -> None:
        if min(self.delta_e, self.delta_c, self.delta_b) <= 0:
            raise ValueError("all timing components must be strictly positive")

    @property
    def coupled_slot(self) -> int:
        return self.delta_e + self.delta_c + self.delta_b

    @property
    def pipelined_slot(self) -> int:
        return max(self.delta_c, self.delta_b)


def beta(t: TimingModel) -> Fraction:
    """Decoupling speed-up: slot time over execution time."""
    return Fraction(t.delta_e + t.delta_c + t.delta_b, t.delta_e)


class ValidatorStatus(Enum):
    HONEST = "honest"
    RATIONAL = "rational"
    BYZANTINE = "byzantine"  # falsifies access declarations (partial mode)
    EXCLUDED = "excluded"


class ValidatorSet:
    def __init__(self, statuses: list[ValidatorStatus], rotation: str = "round-robin", seed: int = 0):
        if rotation not in ("round-robin", "uniform"):
            raise ValueError(f"unknown rotation {rotation!r}")
        self.statuses = list(statuses)
        self.rotation = rotation
        self._rng = np.random.default_rng([seed, 0x5EED])

    def __len__(self) -> int:
        return len(self.statuses)

    def active(self) -> list[int]:
        return [v for v, s in enumerate(self.statuses) if s is not ValidatorStatus.EXCLUDED]

    def proposer(self, rnd: int) -> int:
        active = self.active()
        if not active:
            raise InvariantViolation("every validator has been excluded")
        if self.rotation == "uniform":
            return int(active[self._rng.integers(len(active))])
        return active[rnd % len(active)]

    def exclude(self, v: int) -> None:
        self.statuses[v] = ValidatorStatus.EXCLUDED


@dataclass
class RoundEntry:
    round: int
    proposer: int
    block: Block
    mempool: tuple[Transaction, ...]
    build_settled_round: int
    finalize_ms: int
    exec_round: int
    exec_done_ms: int
    pre_state: StateSnapshot | None = None
    outcomes: list[ExecOutcome] = field(default_factory=list)
    rewards_after: tuple[int, ...] = ()
    excluded: bool = False  # proposer excluded at this block's execution

    @property
    def mempool_size(self) -> int:
        return len(self.mempool)


@dataclass
class RunRecord:
    mode: Mode
    n_validators: int
    g_cap: int
    timing: TimingModel
    slot_ms: int
    beta: Fraction
    lag: int
    entries: list[RoundEntry] = field(default_factory=list)
    rewards: list[int] = field(default_factory=list)
    statuses: list[ValidatorStatus] = field(default_factory=list)
    submitted: dict[int, int] = field(default_factory=dict)  # tx id -> submit round
    senders: dict[int, int] = field(default_factory=dict)
    origins: dict[int, str] = field(default_factory=dict)
    final_state: StateSnapshot | None = None
    initial_state: StateSnapshot | None = None

    @property
    def rounds(self) -> int:
        return len(self.entries)


def initial_state(config: "SimConfig", layout: Layout) -> StateSnapshot:
    cells = {layout.honest_start + k: config.workload.honest_balance for k in range(layout.honest_pool)}
    adv = config.workload.adversary
    if adv.funding:
        cells[layout.adversary] = adv.funding
    if adv.trigger_initial:
        cells[layout.trigger] = 1
    return StateSnapshot(cells, -1)


def arrivals(config: "SimConfig", layout: Layout, rnd: int) -> list[Transaction]:
    spec = config.workload
    txs = list(gen_honest(spec, rnd, config.seed, layout))
    kind = spec.adversary.kind
    if kind == "gaslight":
        txs += gen_gaslight(spec, rnd, spec.adversary.target_builder, config.n, config.g_cap, config.seed, layout)
    elif kind == "fund-drain":
        txs += gen_fund_drain(spec, rnd, config.seed, layout)
    return txs


class _Driver:
    def __init__(self, config: "SimConfig", mode: Mode, lag: int):
        self.cfg = config
        self.mode = mode
        self.lag = lag
        self.layout = config.layout
        statuses = [ValidatorStatus.HONEST] * config.n
        for v in config.rational:
            statuses[v] = ValidatorStatus.RATIONAL
        for v in config.byzantine:
            statuses[v] = ValidatorStatus.BYZANTINE
        self.validators = ValidatorSet(statuses, config.rotation, config.seed)
        self.build = builder_for(config.builder)
        t = config.timing
        self.slot = t.coupled_slot if mode is Mode.COUPLED else t.pipelined_slot
        self.shift = t.delta_b if config.exec_shift_ms is None else config.exec_shift_ms
        self.state = initial_state(config, self.layout)
        self.record = RunRecord(
            mode=mode, n_validators=config.n, g_cap=config.g_cap, timing=t, slot_ms=self.slot,
            beta=beta(t), lag=lag, rewards=[0] * config.n, initial_state=self.state,
        )
        self.committed = 0  # entries[:committed] are executed
        self._tentative_done = 0

    # -- timing --------------------------------------------------------------

    def _schedule(self, i: int) -> tuple[int, int, int]:
        t = self.cfg.timing
        if self.mode is Mode.COUPLED:
            return i * self.slot + t.delta_b + t.delta_c, i, (i + 1) * self.slot
        start = i * self.slot
        finalize = start + t.delta_b + t.delta_c
        if self.mode is Mode.DECOUPLED:
            return finalize, i + self.lag, finalize + t.delta_e + self.lag * self.slot
        tentative = max(start + t.delta_b + self.shift, self._tentative_done) + t.delta_e
        self._tentative_done = tentative
        done = max(tentative, finalize)
        return finalize, max(math.ceil(done / self.slot) - 1, i), done

    # -- execution -----------------------------------------------------------

    def _commit_until(self, rnd: int) -> None:
        entries = self.record.entries
        while self.committed < len(entries) and entries[self.committed].exec_round < rnd:
            e = entries[self.committed]
            e.pre_state = self.state
            self.state, e.outcomes = execute_block(
                e.block, self.state, self.cfg.cost_model, verify=self.mode is Mode.PARTIAL
            )
            for o in e.outcomes:
                if o.uncollected < 0 or self.state.get(self.record.senders[o.tx_id]) < 0:
                    raise InvariantViolation(f"negative balance after tx {o.tx_id}")
            self.record.rewards[e.proposer] += sum(o.charged for o in e.outcomes)
            if any(o.reason == "misdeclared" for o in e.outcomes):
                e.excluded = True
                self.validators.exclude(e.proposer)
            e.rewards_after = tuple(self.record.rewards)
            self.committed += 1

    # -- building ------------------------------------------------------------

    def _pending_writes(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for e in self.record.entries[self.committed:]:
            out |= e.block.declared_write_union
        return out

    def _check_block(self, block: Block, st: StateSnapshot | None) -> None:
        cfg = self.cfg
        if len(block.txs) > cfg.n:
            raise InvariantViolation(f"round {block.round}: {len(block.txs)} txs exceed N={cfg.n}")
        if self.mode is Mode.COUPLED and cfg.builder == "knapsack":
            assert st is not None
            total = sum(gas_actual(tx, st) for tx in block.txs)
        else:
            total = block.est_total
        if total > cfg.g_cap:
            raise InvariantViolation(f"round {block.round}: block gas {total} exceeds G")

    def _tamper(self, block: Block) -> Block:
        """Byzantine proposer: drop one written cell from one declaration."""
        if not block.txs or block.declared_writes is None:
            return block
        victim = block.txs[0].id
        writes = dict(block.declared_writes)
        writes[victim] = frozenset(sorted(writes[victim])[1:])
        return Block(block.round, block.proposer, block.txs, block.declared_reads, writes,
                     block.predicted_gas, block.flags | {"tampered"})

    def step(self, rnd: int, mempool: Mempool) -> Mempool:
        cfg = self.cfg
        self._commit_until(rnd)
        proposer = self.validators.proposer(rnd)
        status = self.validators.statuses[proposer]

        # rational validators submit junk every round
        keep: Callable[[Transaction], bool] = lambda tx: True  # noqa: E731
        junk: list[Transaction] = []
        for v, s in enumerate(self.validators.statuses):
            if s is not ValidatorStatus.RATIONAL:
                continue
            subs, filt = rational_validator_policy(
                v, rnd, v == proposer, mempool, cfg.workload, cfg.n, cfg.g_cap, self.layout
            )
            junk.extend(subs)
            if v == proposer:
                keep = filt
        new = arrivals(cfg, self.layout, rnd) + junk
        for tx in new:
            self.record.submitted[tx.id] = rnd
            self.record.senders[tx.id] = tx.sender
            self.record.origins[tx.id] = tx.origin
        mempool = mempool.advance((), new)

        view = tuple(tx for tx in mempool.txs() if keep(tx))
        st = None if (self.mode is Mode.DECOUPLED and cfg.builder == "greedy-est") else self.state
        ctx = BuildContext(
            mempool=view, mode=self.mode, n_cap=cfg.n, g_cap=cfg.g_cap, state=st,
            pending_writes=self._pending_writes() if self.mode is Mode.PARTIAL else frozenset(),
            round=rnd, proposer=proposer, cost_model=cfg.cost_model,
        )
        block = self.build(ctx)
        if self.mode is Mode.PARTIAL and status is ValidatorStatus.BYZANTINE:
            block = self._tamper(block)
        self._check_block(block, st)
        rest = mempool.advance(block, ())
        if cfg.reorder_hot:
            block = reorder_hot(block, rest)

        finalize, exec_round, done = self._schedule(rnd)
        self.record.entries.append(RoundEntry(
            round=rnd, proposer=proposer, block=block, mempool=mempool.txs(),
            build_settled_round=self.committed - 1, finalize_ms=finalize,
            exec_round=exec_round, exec_done_ms=done,
        ))
        self._check_conservation(rest)
        if self.mode is Mode.COUPLED:
            self._commit_until(rnd + 1)
        return rest

    def _check_conservation(self, mempool: Mempool) -> None:
        included = [tx.id for e in self.record.entries for tx in e.block.txs]
        inc = set(included)
        if len(inc) != len(included):
            raise InvariantViolation("a transaction was included twice")
        pending = set(mempool.pending)
        if inc & pending or inc | pending != set(self.record.submitted):
            raise InvariantViolation("mempool conservation broken")

    def run(self, rounds: int) -> RunRecord:
        mempool = Mempool()
        for rnd in range(rounds):
            mempool = self.step(rnd, mempool)
        self._commit_until(10**12)  # flush the execution pipeline
        self.record.statuses = list(self.validators.statuses)
        self.record.final_state = self.state
        return self.record


def _rounds(config: "SimConfig", rounds: int | None) -> int:
    n = config.rounds if rounds is None else rounds
    if n < 0:
        raise ValueError("rounds must be non-negative")
    return n


def _with_workload(config: "SimConfig", workload: WorkloadSpec | None) -> "SimConfig":
    return config if workload is None else config.replace(workload=workload)


def run_coupled(config: "SimConfig", workload: WorkloadSpec | None = None, rounds: int | None = None) -> RunRecord:
    cfg = _with_workload(config, workload)
    return _Driver(cfg, Mode.COUPLED, 0).run(_rounds(cfg, rounds))


def run_decoupled(
    config: "SimConfig", workload: WorkloadSpec | None = None, rounds: int | None = None, lag: int | None = None
) -> RunRecord:
    cfg = _with_workload(config, workload)
    lag = cfg.lag if lag is None else lag
    if lag < 0:
        raise ValueError("lag must be non-negative")
    return _Driver(cfg, Mode.DECOUPLED, lag).run(_rounds(cfg, rounds))


def run_partial(config: "SimConfig", workload: WorkloadSpec | None = None, rounds: int | None = None) -> RunRecord:
    cfg = _with_workload(config, workload)
    if cfg.builder != "partial":
        cfg = cfg.replace(builder="partial")
    return _Driver(cfg, Mode.PARTIAL, 0).run(_rounds(cfg, rounds))


def simulate(config: "SimConfig") -> RunRecord:
    mode = Mode(config.mode)
    if mode is Mode.COUPLED:
        return run_coupled(config)
    if mode is Mode.DECOUPLED:
        return run_decoupled(config)
    return run_partial(config)


def executed(run: RunRecord) -> list[tuple[RoundEntry, ExecOutcome]]:
    return [(e, o) for e in run.entries for o in e.outcomes if o.status is Status.EXECUTED]
