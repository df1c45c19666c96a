"""Utilization, reward, fairness, throughput and latency measures over runs.

All ratios are exact ``Fraction`` values; gas ratios are in whole gas units.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .builders import max_cost_block, max_gas_block
from .core import GAS_UNIT, Block, Mempool, StateSnapshot, Transaction
from .execution import CostModel, ExecOutcome, Status, execute_block, gas_actual
from .protocol import RoundEntry, RunRecord

ADVERSARY_ORIGINS = frozenset({"setup", "gaslight", "shadow", "junk", "drain", "charge"})
DEFAULT_EPS = Fraction(1, 20)
MIN_ROTATIONS = 10


class EmptyRun(ValueError):
    pass


class TxNeverExecuted(LookupError):
    pass


def _ratio(num: int, den: int) -> Fraction:
    # nothing to gain means nothing was missed
    return Fraction(1) if den == 0 else Fraction(num, den)


def _txs(m: Mempool | Iterable[Transaction]) -> tuple[Transaction, ...]:
    return m.txs() if isinstance(m, Mempool) else tuple(m)


def executed_gas(outcomes: Iterable[ExecOutcome]) -> int:
    return sum(o.gas_consumed for o in outcomes if o.status is Status.EXECUTED)


def burned_gas(outcomes: Iterable[ExecOutcome]) -> int:
    return sum(o.gas_consumed for o in outcomes)


def block_owed(outcomes: Iterable[ExecOutcome]) -> int:
    return sum(o.owed for o in outcomes)


def cr_res(b: Block, st: StateSnapshot, g_cap: int, cost_model: CostModel = CostModel()) -> Fraction:
    """Executed gas of ``b`` run from ``st`` over the capacity ``g_cap`` (micro)."""
    _, outs = execute_block(b, st, cost_model)
    return Fraction(executed_gas(outs), g_cap)


def cr_res_star(
    b: Block, mempool: Mempool | Iterable[Transaction], st: StateSnapshot, n_cap: int, g_cap: int,
    cost_model: CostModel = CostModel(),
) -> Fraction:
    """Gas of ``b`` against the best block the state-aware oracle could build."""
    _, outs = execute_block(b, st, cost_model)
    best = max_gas_block(_txs(mempool), st, n_cap, g_cap)
    _, best_outs = execute_block(Block(b.round, b.proposer, best), st, cost_model)
    return _ratio(executed_gas(outs), executed_gas(best_outs))


def cr_rew_star(
    b: Block, mempool: Mempool | Iterable[Transaction], st: StateSnapshot, n_cap: int, g_cap: int,
    cost_model: CostModel = CostModel(),
) -> Fraction:
    """Block cost of ``b`` against the cost-maximizing block at ``st``."""
    _, outs = execute_block(b, st, cost_model)
    best = max_cost_block(_txs(mempool), st, n_cap, g_cap, cost_model)
    _, best_outs = execute_block(Block(b.round, b.proposer, best), st, cost_model)
    return _ratio(block_owed(outs), block_owed(best_outs))


def is_congested(mempool: Mempool | Iterable[Transaction], st: StateSnapshot, n_cap: int, g_cap: int) -> bool:
    """Whether some admissible subset's gas at ``st`` fills ``g_cap`` exactly."""
    best = max_gas_block(_txs(mempool), st, n_cap, g_cap)
    return sum(gas_actual(tx, st) for tx in best) == g_cap


@dataclass(frozen=True)
class BlockMetrics:
    round: int
    proposer: int
    cr_res: Fraction
    cr_res_star: Fraction
    cr_rew_star: Fraction
    burned_ratio: Fraction
    reward: int
    est_total: int
    gas_executed: int
    attacked: bool


def is_attacked(entry: RoundEntry, origins: dict[int, str]) -> bool:
    """A block carrying adversarial junk that executed below its estimate."""
    ests = {tx.id: tx.est for tx in entry.block.txs}
    return any(
        origins.get(o.tx_id) in ("gaslight", "junk") and o.status is Status.EXECUTED and o.gas_consumed < ests[o.tx_id]
        for o in entry.outcomes
    )


def block_metrics(run: RunRecord, entry: RoundEntry, cost_model: CostModel = CostModel()) -> BlockMetrics:
    if entry.pre_state is None:
        raise ValueError(f"block of round {entry.round} was never executed")
    g = run.g_cap
    gas = executed_gas(entry.outcomes)
    st = entry.pre_state
    best = max_gas_block(entry.mempool, st, run.n_validators, g)
    _, best_outs = execute_block(Block(entry.round, entry.proposer, best), st, cost_model)
    best_c = max_cost_block(entry.mempool, st, run.n_validators, g, cost_model)
    _, best_c_outs = execute_block(Block(entry.round, entry.proposer, best_c), st, cost_model)
    return BlockMetrics(
        round=entry.round,
        proposer=entry.proposer,
        cr_res=Fraction(gas, g) if g else Fraction(1),
        cr_res_star=_ratio(gas, executed_gas(best_outs)),
        cr_rew_star=_ratio(block_owed(entry.outcomes), block_owed(best_c_outs)),
        burned_ratio=Fraction(burned_gas(entry.outcomes), g) if g else Fraction(1),
        reward=sum(o.charged for o in entry.outcomes),
        est_total=entry.block.est_total,
        gas_executed=gas,
        attacked=is_attacked(entry, run.origins),
    )


def run_block_metrics(run: RunRecord, cost_model: CostModel = CostModel(), star: bool = True) -> list[BlockMetrics]:
    if star:
        return [block_metrics(run, e, cost_model) for e in run.entries]
    g = run.g_cap
    out = []
    for e in run.entries:
        gas = executed_gas(e.outcomes)
        out.append(BlockMetrics(
            e.round, e.proposer, Fraction(gas, g) if g else Fraction(1), Fraction(-1), Fraction(-1),
            Fraction(burned_gas(e.outcomes), g) if g else Fraction(1), sum(o.charged for o in e.outcomes),
            e.block.est_total, gas, is_attacked(e, run.origins),
        ))
    return out


# -- run-level measures -------------------------------------------------------

def _nonempty(run: RunRecord) -> None:
    if not run.entries:
        raise EmptyRun("the run has no rounds")


def throughput(run: RunRecord) -> Fraction:
    """Executed gas per round, in gas units."""
    _nonempty(run)
    total = sum(executed_gas(e.outcomes) for e in run.entries)
    return Fraction(total, GAS_UNIT * run.rounds)


def throughput_per_second(run: RunRecord) -> Fraction:
    return throughput(run) * 1000 / run.slot_ms


@dataclass(frozen=True)
class TxLatency:
    tx_id: int
    rounds: int
    ms: int


def _latencies(run: RunRecord) -> dict[int, TxLatency]:
    out = {}
    for e in run.entries:
        if e.pre_state is None:
            continue
        for tx in e.block.txs:
            sub = run.submitted[tx.id]
            out[tx.id] = TxLatency(tx.id, e.exec_round - sub + 1, e.exec_done_ms - sub * run.slot_ms)
    return out


def latency(run: RunRecord, tx_id: int) -> TxLatency:
    """Rounds and milliseconds from submission until its block finished executing."""
    _nonempty(run)
    lat = _latencies(run).get(tx_id)
    if lat is None:
        raise TxNeverExecuted(f"transaction {tx_id} was never executed")
    return lat


@dataclass(frozen=True)
class LatencySummary:
    count: int
    mean_rounds: Fraction
    mean_ms: Fraction
    pending: int  # submitted but never included


def mean_latency(run: RunRecord, origins: Iterable[str] | None = ("honest",)) -> LatencySummary:
    """Mean over included transactions, restricted to ``origins`` (None for all)."""
    _nonempty(run)
    keep = None if origins is None else set(origins)
    lats = [lat for tid, lat in _latencies(run).items() if keep is None or run.origins[tid] in keep]
    wanted = [t for t, o in run.origins.items() if keep is None or o in keep]
    if not lats:
        raise TxNeverExecuted("no transaction was executed")
    n = len(lats)
    return LatencySummary(
        count=n,
        mean_rounds=Fraction(sum(x.rounds for x in lats), n),
        mean_ms=Fraction(sum(x.ms for x in lats), n),
        pending=len(wanted) - n,
    )


@dataclass(frozen=True)
class FairnessReport:
    rewards: tuple[int, ...]
    ratios: tuple[tuple[float, ...], ...]  # ratios[i][j] = rho_i / rho_j
    eps: Fraction
    fair: bool
    max_deviation: float
    rotations: int
    long_enough: bool


def fairness(run: RunRecord, eps: Fraction = DEFAULT_EPS, validators: Sequence[int] | None = None) -> FairnessReport:
    """Pairwise reward ratios; fair iff every ratio is within ``eps`` of 1.

    A zero reward facing a positive one gives an infinite ratio. Two zero
    rewards compare as equal.
    """
    rho = tuple(run.rewards)
    idx = list(range(len(rho))) if validators is None else list(validators)
    ratios = []
    worst = 0.0
    for i in range(len(rho)):
        row = []
        for j in range(len(rho)):
            if rho[j] == 0:
                r = 1.0 if rho[i] == 0 else math.inf
                dev = 0.0 if rho[i] == 0 else math.inf
            else:
                r = rho[i] / rho[j]
                dev = float(abs(Fraction(rho[i], rho[j]) - 1))
            row.append(r)
            if i in idx and j in idx:
                worst = max(worst, dev)
        ratios.append(tuple(row))
    rotations = run.rounds // max(run.n_validators, 1)
    return FairnessReport(
        rewards=rho, ratios=tuple(ratios), eps=eps, fair=worst <= eps, max_deviation=worst,
        rotations=rotations, long_enough=rotations >= MIN_ROTATIONS,
    )


def adversary_charge(run: RunRecord) -> tuple[int, int]:
    """(collected, uncollected) over all adversary-originated transactions."""
    got = lost = 0
    for e in run.entries:
        for o in e.outcomes:
            if run.origins.get(o.tx_id) in ADVERSARY_ORIGINS:
                got += o.charged
                lost += o.uncollected
    return got, lost


def total_uncollected(run: RunRecord) -> int:
    return sum(o.uncollected for e in run.entries for o in e.outcomes)


# -- export -------------------------------------------------------------------

ROUND_FIELDS = (
    "round", "proposer", "txs", "mempool", "block_gas_est", "block_gas_actual", "cr_res", "cr_res_star",
    "cr_rew_star", "burned_ratio", "reward", "exec_round", "exec_done_ms", "attacked", "flags",
)


def _fmt(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def rounds_csv(run: RunRecord, metrics: Sequence[BlockMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = run.n_validators
    w.writerow(ROUND_FIELDS + tuple(f"rho_{v}" for v in range(n)))
    for e, m in zip(run.entries, metrics):
        w.writerow((
            e.round, e.proposer, len(e.block.txs), e.mempool_size, _fmt(Fraction(m.est_total, GAS_UNIT)),
            _fmt(Fraction(m.gas_executed, GAS_UNIT)), _fmt(m.cr_res),
            _fmt(m.cr_res_star) if m.cr_res_star >= 0 else "", _fmt(m.cr_rew_star) if m.cr_rew_star >= 0 else "",
            _fmt(m.burned_ratio), m.reward, e.exec_round, e.exec_done_ms, int(m.attacked),
            ";".join(sorted(e.block.flags)),
        ) + tuple(e.rewards_after or (0,) * n))
    return buf.getvalue()


def summary(run: RunRecord, metrics: Sequence[BlockMetrics], eps: Fraction = DEFAULT_EPS) -> dict:
    """Flat JSON-ready summary of a run."""
    _nonempty(run)
    attacked = [m for m in metrics if m.attacked]
    fair = fairness(run, eps)
    got, lost = adversary_charge(run)
    try:
        lat = mean_latency(run)
        lat_d = {"mean_rounds": _fmt(lat.mean_rounds), "mean_ms": float(lat.mean_ms), "count": lat.count,
                 "pending": lat.pending}
    except TxNeverExecuted:
        lat_d = None
    star = [m.cr_res_star for m in metrics if m.cr_res_star >= 0]
    return {
        "mode": run.mode.value,
        "rounds": run.rounds,
        "slot_ms": run.slot_ms,
        "beta": _fmt(run.beta),
        "lag": run.lag,
        "min_cr_res": _fmt(min(m.cr_res for m in metrics)),
        "mean_cr_res": _fmt(sum((m.cr_res for m in metrics), Fraction(0)) / len(metrics)),
        "min_cr_res_star": _fmt(min(star)) if star else None,
        "attacked_blocks": len(attacked),
        "attacked_max_cr_res": _fmt(max(m.cr_res for m in attacked)) if attacked else None,
        "attacked_max_cr_res_star": _fmt(max(m.cr_res_star for m in attacked)) if attacked and star else None,
        "throughput_per_round": _fmt(throughput(run)),
        "throughput_per_second": float(throughput_per_second(run)),
        "latency": lat_d,
        "adversary_charged": got,
        "adversary_uncollected": lost,
        "uncollected_total": total_uncollected(run),
        "rewards": list(run.rewards),
        "fair": fair.fair,
        "fairness_max_deviation": fair.max_deviation,
        "fairness_rotations": fair.rotations,
        "fairness_long_enough": fair.long_enough,
        "excluded": [v for v, s in enumerate(run.statuses) if s.value == "excluded"],
        "flagged_rounds": sum(1 for e in run.entries if e.block.flags - {"mempool-empty"}),
    }


def report(summary_dict: dict) -> str:
    """Human-readable block for a summary."""
    width = max(len(k) for k in summary_dict)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in summary_dict.items()) + "\n"
