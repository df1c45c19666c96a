"""Block creation for the coupled, decoupled and partially coupled pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .core import GAS_UNIT, Block, Mempool, StateSnapshot, Transaction, actual_access_sets
from .execution import CostModel, _execute, gas_actual, max_charge


class Mode(str, Enum):
    COUPLED = "coupled"
    DECOUPLED = "decoupled"
    PARTIAL = "partial"


BUILDERS = ("knapsack", "greedy-est", "partial")

# Block flags
MEMPOOL_EMPTY = "mempool-empty"
NON_TRIVIALITY = "non-triviality-violated"
NO_INDEPENDENT = "no-independent-transactions"
UNDERFILLED = "underfilled"


@dataclass(frozen=True)
class BuildContext:
    mempool: tuple[Transaction, ...]
    mode: Mode
    n_cap: int
    g_cap: int  # micro-gas
    state: StateSnapshot | None = None
    pending_writes: frozenset[int] = frozenset()
    round: int = 0
    proposer: int = 0
    cost_model: CostModel = field(default_factory=CostModel)


def knapsack(items: Iterable[tuple[int, int, int]], capacity: int, max_count: int) -> tuple[int, ...]:
    """Exact 0/1 knapsack with a cardinality cap.

    ``items`` are ``(id, weight, value)``. Returns the sorted ids of the subset
    with maximum total value; ties go to fewer items, then to the
    lexicographically smallest id tuple. Zero-value items never appear.
    """
    by_weight: dict[int, list[tuple[int, int, int]]] = {}
    for tid, w, v in items:
        if v > 0 and w <= capacity:
            by_weight.setdefault(w, []).append((tid, w, v))
    pool: list[tuple[int, int, int]] = []
    for w, group in by_weight.items():
        # only the best k of a weight class can ever be used together
        k = max_count if w == 0 else min(max_count, capacity // w)
        group.sort(key=lambda it: (-it[2], it[0]))
        pool.extend(group[:k])
    pool.sort()

    # (weight, count) -> (value, ids)
    states: dict[tuple[int, int], tuple[int, tuple[int, ...]]] = {(0, 0): (0, ())}
    for tid, w, v in pool:
        for (sw, sc), (sv, ids) in list(states.items()):
            nw, nc = sw + w, sc + 1
            if nw > capacity or nc > max_count:
                continue
            cand = (sv + v, ids + (tid,))
            cur = states.get((nw, nc))
            if cur is None or cand[0] > cur[0] or (cand[0] == cur[0] and cand[1] < cur[1]):
                states[(nw, nc)] = cand
    _, _, best = min((-val, len(ids), ids) for val, ids in states.values())
    return best


def _by_id(txs: Iterable[Transaction]) -> dict[int, Transaction]:
    return {tx.id: tx for tx in txs}


def _usable(tx: Transaction, gas: int) -> bool:
    # a proposer that knows the state never packs a transaction that will abort
    return gas <= tx.est


def _affordable(txs: Sequence[Transaction], st: StateSnapshot, cost_model: CostModel) -> list[Transaction]:
    """Keep, per sender and in id order, transactions whose worst-case charges fit the balance."""
    budget: dict[int, int] = {}
    out = []
    for tx in sorted(txs, key=lambda t: t.id):
        left = budget.get(tx.sender, st.get(tx.sender))
        need = max_charge(tx, cost_model)
        if need <= left:
            budget[tx.sender] = left - need
            out.append(tx)
    return out


def _min_size(g_cap: int, mempool_size: int) -> int:
    return min(g_cap // GAS_UNIT, mempool_size)


def max_gas_block(txs: Iterable[Transaction], st: StateSnapshot, n_cap: int, g_cap: int) -> tuple[Transaction, ...]:
    """State-aware optimum: the subset with maximum total gas at ``st``."""
    pool = _by_id(txs)
    items = []
    for tx in pool.values():
        g = gas_actual(tx, st)
        if _usable(tx, g):
            items.append((tx.id, g, g))
    return tuple(pool[i] for i in knapsack(items, g_cap, n_cap))


def max_cost_block(
    txs: Iterable[Transaction], st: StateSnapshot, n_cap: int, g_cap: int, cost_model: CostModel
) -> tuple[Transaction, ...]:
    """State-aware optimum for block cost under ``cost_model``."""
    pool = _by_id(txs)
    items = []
    for tx in pool.values():
        out = _execute(tx, st.get, cost_model)
        if _usable(tx, out.path_gas):
            items.append((tx.id, out.path_gas, out.owed))
    return tuple(pool[i] for i in knapsack(items, g_cap, n_cap))


def _pad_zero_gas(
    chosen: list[Transaction], candidates: Sequence[Transaction], gas: dict[int, int],
    n_cap: int, target: int, est_room: int | None,
) -> None:
    taken = {tx.id for tx in chosen}
    for tx in sorted(candidates, key=lambda t: t.id):
        if len(chosen) >= min(target, n_cap):
            break
        if tx.id in taken or gas[tx.id] != 0:
            continue
        if est_room is not None:
            if tx.est > est_room:
                continue
            est_room -= tx.est
        chosen.append(tx)
        taken.add(tx.id)


def _gas_then_fee(cands: Sequence[Transaction], weight: dict[int, int], gas: dict[int, int],
                  st: StateSnapshot, cost_model: CostModel) -> list[tuple[int, int, int]]:
    """Knapsack items whose value ranks blocks by gas first and fee second."""
    fee = {tx.id: _execute(tx, st.get, cost_model).owed for tx in cands}
    scale = sum(fee.values()) + 1
    return [(tx.id, weight[tx.id], gas[tx.id] * scale + fee[tx.id]) for tx in cands]


def build_coupled_knapsack(ctx: BuildContext) -> Block:
    """Maximise executed gas at the settled state, capped by ``g_cap`` and ``n_cap``.

    Among gas-optimal blocks the one paying the most fees wins, then the
    fewest transactions, then the lowest ids.
    """
    if ctx.state is None:
        raise ValueError("the coupled builder needs the settled state")
    if not ctx.mempool:
        return Block(ctx.round, ctx.proposer, (), flags=frozenset({MEMPOOL_EMPTY}))
    st = ctx.state
    cands = _affordable(ctx.mempool, st, ctx.cost_model)
    gas = {tx.id: gas_actual(tx, st) for tx in cands}
    cands = [tx for tx in cands if _usable(tx, gas[tx.id])]
    pool = _by_id(cands)
    items = _gas_then_fee(cands, gas, gas, st, ctx.cost_model)
    chosen = [pool[i] for i in knapsack(items, ctx.g_cap, ctx.n_cap)]
    need = _min_size(ctx.g_cap, len(ctx.mempool))
    if len(chosen) < need:
        _pad_zero_gas(chosen, cands, gas, ctx.n_cap, need, None)
    chosen.sort(key=lambda t: t.id)
    flags = {NON_TRIVIALITY} if len(chosen) < need else set()
    return Block(ctx.round, ctx.proposer, tuple(chosen), flags=frozenset(flags))


def decoupled_order(tx: Transaction) -> tuple[int, int, int]:
    return (-tx.price, -tx.est, tx.id)


def build_decoupled(ctx: BuildContext) -> Block:
    """State-oblivious greedy fill by (price desc, est desc, id asc) under the Est cap."""
    if not ctx.mempool:
        return Block(ctx.round, ctx.proposer, (), flags=frozenset({MEMPOOL_EMPTY}))
    chosen: list[Transaction] = []
    used = 0
    for tx in sorted(ctx.mempool, key=decoupled_order):
        if len(chosen) >= ctx.n_cap:
            break
        if used + tx.est <= ctx.g_cap:
            chosen.append(tx)
            used += tx.est
    flags = {NON_TRIVIALITY} if len(chosen) < _min_size(ctx.g_cap, len(ctx.mempool)) else set()
    return Block(ctx.round, ctx.proposer, tuple(chosen), flags=frozenset(flags))


def _covers(tx: Transaction, st: StateSnapshot) -> bool:
    reads, writes = actual_access_sets(tx, st)
    return reads <= tx.declared_reads and writes <= tx.declared_writes


def build_partial(ctx: BuildContext) -> Block:
    """Conflict-aware builder for partial coupling.

    Only transactions whose declared reads miss every pending write are
    eligible; for those the settled state gives the exact gas, so the block is
    packed on true gas under the Est cap. The block records, per transaction,
    the access sets and gas observed by running it in order on the settled
    state.
    """
    if ctx.state is None:
        raise ValueError("the partial builder needs the settled state")
    if not ctx.mempool:
        return Block(ctx.round, ctx.proposer, (), declared_reads={}, declared_writes={},
                     predicted_gas={}, flags=frozenset({MEMPOOL_EMPTY}))
    st = ctx.state
    indep = [tx for tx in ctx.mempool if not (tx.declared_reads & ctx.pending_writes) and _covers(tx, st)]
    cands = _affordable(indep, st, ctx.cost_model)
    gas = {tx.id: gas_actual(tx, st) for tx in cands}
    cands = [tx for tx in cands if _usable(tx, gas[tx.id])]
    pool = _by_id(cands)
    items = _gas_then_fee(cands, {t.id: t.est for t in cands}, gas, st, ctx.cost_model)
    chosen = [pool[i] for i in knapsack(items, ctx.g_cap, ctx.n_cap)]
    need = _min_size(ctx.g_cap, len(ctx.mempool))
    if len(chosen) < need:
        _pad_zero_gas(chosen, cands, gas, ctx.n_cap, need, ctx.g_cap - sum(t.est for t in chosen))
    chosen.sort(key=lambda t: t.id)

    reads, writes, predicted = {}, {}, {}
    cells = dict(st.cells)
    for tx in chosen:
        out = _execute(tx, lambda a: cells.get(a, 0), ctx.cost_model)
        cells.update(out.delta)
        reads[tx.id], writes[tx.id], predicted[tx.id] = out.reads, out.writes, out.path_gas

    flags = set()
    if not indep:
        flags.add(NO_INDEPENDENT)
    if sum(predicted.values()) < ctx.g_cap:
        flags.add(UNDERFILLED)
    if len(chosen) < need:
        flags.add(NON_TRIVIALITY)
    return Block(ctx.round, ctx.proposer, tuple(chosen), declared_reads=reads,
                 declared_writes=writes, predicted_gas=predicted, flags=frozenset(flags))


def _access(block: Block, tx: Transaction) -> tuple[frozenset[int], frozenset[int]]:
    if block.declared_writes is not None and tx.id in block.declared_writes:
        return (block.declared_reads or {}).get(tx.id, tx.declared_reads), block.declared_writes[tx.id]
    return tx.declared_reads, tx.declared_writes


def _disjoint(a: tuple[frozenset[int], frozenset[int]], b: tuple[frozenset[int], frozenset[int]]) -> bool:
    ra, wa = a
    rb, wb = b
    return not (wa & (rb | wb)) and not (wb & ra)


def reorder_hot(block: Block, mempool: Mempool | Iterable[Transaction]) -> Block:
    """Move transactions whose written cells are in demand toward the front.

    Demand is the number of mempool transactions declaring a read on a cell
    the transaction writes. Only access-disjoint neighbours are ever swapped,
    so the executed result is unchanged.
    """
    others = [tx for tx in mempool if tx.id not in set(block.tx_ids())]
    access = {tx.id: _access(block, tx) for tx in block.txs}
    score = {tid: sum(1 for o in others if o.declared_reads & w) for tid, (_, w) in access.items()}
    order = list(block.txs)
    swapped = True
    while swapped:
        swapped = False
        for k in range(len(order) - 1):
            a, b = order[k], order[k + 1]
            if score[b.id] > score[a.id] and _disjoint(access[a.id], access[b.id]):
                order[k], order[k + 1] = b, a
                swapped = True
    return Block(block.round, block.proposer, tuple(order), block.declared_reads,
                 block.declared_writes, block.predicted_gas, block.flags)


BuilderFn = Callable[[BuildContext], Block]


def builder_for(name: str) -> BuilderFn:
    try:
        return {"knapsack": build_coupled_knapsack, "greedy-est": build_decoupled, "partial": build_partial}[name]
    except KeyError:
        raise ValueError(f"unknown builder {name!r}") from None

