"""Workload generators: honest clients and the adversarial strategies.

Every generator is a pure function of its arguments; randomness comes from a
numpy ``Generator`` seeded by ``(seed, round, stream)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .core import GAS_UNIT, Guard, Step, Transaction, Transfer, WriteCell

ID_STRIDE = 1_000_000
_SETUP, _ATTACK, _SHADOW, _JUNK, _DRAIN, _CHARGE = 500_000, 500_001, 510_000, 600_000, 700_000, 700_001

ADVERSARY_KINDS = ("none", "gaslight", "fund-drain", "rational")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Layout:
    """Address plan for one simulation.

    Accounts: validators ``[0, n_validators)``, then the adversary and its
    drain sink, one junk account per validator, then the honest client pool.
    Data cells follow the accounts: the gaslight trigger and the hot cell.
    """

    n_validators: int
    honest_pool: int = 256

    @property
    def adversary(self) -> int:
        return self.n_validators

    @property
    def sink(self) -> int:
        return self.n_validators + 1

    def junk_account(self, validator: int) -> int:
        return self.n_validators + 2 + validator

    @property
    def honest_start(self) -> int:
        return 2 * self.n_validators + 2

    @property
    def accounts(self) -> int:
        return self.honest_start + self.honest_pool

    @property
    def trigger(self) -> int:
        return self.accounts

    @property
    def hot(self) -> int:
        return self.accounts + 1

    @property
    def state_size(self) -> int:
        return self.accounts + 2

    def honest_sender(self, serial: int) -> int:
        return self.honest_start + serial % self.honest_pool


@dataclass(frozen=True)
class AdversaryParams:
    kind: str = "none"
    attack_start: int = 3
    junk_est: int | None = None  # micro-gas; defaults to G/N
    price_premium: int = 1
    drain_offset: int = 2
    funding: int = 0
    shadow: int = 2
    trigger_initial: bool = False
    skip_setup: bool = False
    target_builder: str = "greedy-est"
    attack_txs: int = 1  # fund-drain: chargeable transactions at the attack round
    drain_gas: int = 10


@dataclass(frozen=True)
class WorkloadSpec:
    rate: int = 10
    # (micro-gas, weight) pairs
    gas_values: tuple[tuple[int, int], ...] = ((GAS_UNIT, 1),)
    est_factor: Fraction | None = None  # None = exact estimates
    price_min: int = 1
    price_max: int = 10
    hot_fraction: Fraction = Fraction(0)
    honest_balance: int = 10**15
    adversary: AdversaryParams = field(default_factory=AdversaryParams)

    @property
    def adversary_price(self) -> int:
        return self.price_max + self.adversary.price_premium


def _rng(seed: int, rnd: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, rnd, stream])


def overestimate(gas: int, factor: Fraction | None) -> int:
    if factor is None:
        return gas
    return min(GAS_UNIT, int(gas * Fraction(factor)))


def gen_honest(spec: WorkloadSpec, rnd: int, seed: int, layout: Layout) -> tuple[Transaction, ...]:
    """Single-step honest transactions arriving in round ``rnd``.

    A ``hot_fraction`` share reads and rewrites the hot cell; the rest only pay
    for gas. Declared access sets equal the actual ones.
    """
    if spec.rate <= 0:
        return ()
    rng = _rng(seed, rnd, 0)
    values = np.array([g for g, _ in spec.gas_values])
    weights = np.array([w for _, w in spec.gas_values], dtype=float)
    gas = rng.choice(values, size=spec.rate, p=weights / weights.sum())
    prices = rng.integers(spec.price_min, spec.price_max + 1, size=spec.rate)
    hot = rng.random(size=spec.rate) < float(spec.hot_fraction)
    if spec.hot_fraction >= 1:
        hot[:] = True
    out = []
    for k in range(spec.rate):
        sender = layout.honest_sender(rnd * spec.rate + k)
        g = int(gas[k])
        if hot[k]:
            step = Step(g, Guard(layout.hot, ">=", 0), (WriteCell(layout.hot, rnd + 1),))
            reads = writes = frozenset({sender, layout.hot})
        else:
            step = Step(g)
            reads = writes = frozenset({sender})
        out.append(Transaction(
            id=rnd * ID_STRIDE + k, sender=sender, price=int(prices[k]),
            est=overestimate(g, spec.est_factor), steps=(step,),
            declared_reads=reads, declared_writes=writes, submit_round=rnd,
        ))
    return tuple(out)


def gaslight_program(trigger: int, expensive: int) -> tuple[Step, ...]:
    """Zero-gas early exit when the trigger is set, otherwise ``expensive`` gas."""
    return (Step(0, Guard(trigger, ">=", 1), (), halt=True), Step(expensive))


def _junk(tx_id: int, sender: int, price: int, est: int, rnd: int, layout: Layout, origin: str) -> Transaction:
    return Transaction(
        id=tx_id, sender=sender, price=price, est=est,
        steps=gaslight_program(layout.trigger, est),
        declared_reads=frozenset({sender, layout.trigger}), declared_writes=frozenset({sender}),
        submit_round=rnd, origin=origin,
    )


def junk_est(spec: WorkloadSpec, n_cap: int, g_cap: int) -> int:
    return spec.adversary.junk_est if spec.adversary.junk_est is not None else g_cap // n_cap


def gen_gaslight(
    spec: WorkloadSpec, rnd: int, target_builder: str, n_cap: int, g_cap: int, seed: int, layout: Layout
) -> tuple[Transaction, ...]:
    """Gaslighting transactions for round ``rnd``.

    One round before the attack starts, a setup transaction sets the trigger
    cell. From ``attack_start`` on, every round brings ``n_cap`` transactions
    with Est = G/N at the top price whose cheap path costs zero gas once the
    trigger is set, plus ``shadow`` full-gas transactions priced at zero that
    a state-aware builder would prefer.
    """
    del seed  # the construction is deterministic
    if target_builder != "greedy-est":
        raise ConfigError("gaslighting needs a predictable builder (greedy-est)")
    adv = spec.adversary
    price = spec.adversary_price
    base = rnd * ID_STRIDE
    out: list[Transaction] = []
    if rnd == adv.attack_start - 1 and not adv.skip_setup:
        out.append(Transaction(
            id=base + _SETUP, sender=layout.adversary, price=price + 1, est=0,
            steps=(Step(0, None, (WriteCell(layout.trigger, 1),)),),
            declared_reads=frozenset({layout.adversary}),
            declared_writes=frozenset({layout.adversary, layout.trigger}),
            submit_round=rnd, origin="setup",
        ))
    if rnd >= adv.attack_start:
        est = junk_est(spec, n_cap, g_cap)
        for k in range(n_cap):
            out.append(_junk(base + _ATTACK + k, layout.adversary, price, est, rnd, layout, "gaslight"))
        for k in range(adv.shadow):
            out.append(Transaction(
                id=base + _SHADOW + k, sender=layout.adversary, price=0, est=GAS_UNIT,
                steps=(Step(GAS_UNIT),), declared_reads=frozenset({layout.adversary}),
                declared_writes=frozenset({layout.adversary}), submit_round=rnd, origin="shadow",
            ))
    return tuple(out)


def gen_fund_drain(spec: WorkloadSpec, rnd: int, seed: int, layout: Layout) -> tuple[Transaction, ...]:
    """Empty the adversary account ``drain_offset`` rounds before charging it.

    The drain transaction pays its own (exact-estimate) gas and moves the
    rest of ``funding`` to the sink account. At ``attack_start`` the adversary
    submits chargeable zero-gas transactions from the emptied account.
    """
    del seed
    adv = spec.adversary
    price = spec.adversary_price
    base = rnd * ID_STRIDE
    if rnd == adv.attack_start - adv.drain_offset:
        own = (price + 1) * adv.drain_gas
        return (Transaction(
            id=base + _DRAIN, sender=layout.adversary, price=price + 1, est=adv.drain_gas,
            steps=(Step(adv.drain_gas, None, (Transfer(layout.sink, max(adv.funding - own, 0)),)),),
            declared_reads=frozenset({layout.adversary}),
            declared_writes=frozenset({layout.adversary, layout.sink}),
            submit_round=rnd, origin="drain",
        ),)
    if rnd == adv.attack_start:
        est = adv.junk_est if adv.junk_est is not None else GAS_UNIT // 4
        return tuple(
            Transaction(
                id=base + _CHARGE + k, sender=layout.adversary, price=price, est=est, steps=(Step(0),),
                declared_reads=frozenset({layout.adversary}), declared_writes=frozenset({layout.adversary}),
                submit_round=rnd, origin="charge",
            )
            for k in range(adv.attack_txs)
        )
    return ()


def rational_validator_policy(
    validator: int, rnd: int, is_proposer: bool, mempool: Iterable[Transaction],
    spec: WorkloadSpec, n_cap: int, g_cap: int, layout: Layout,
) -> tuple[tuple[Transaction, ...], Callable[[Transaction], bool]]:
    """Junk submissions for this round and the block filter to build with.

    The junk is gaslighting-style (Est = G/N, top price, zero gas once the
    trigger is set). As proposer, the validator keeps its own junk out.
    """
    del mempool
    account = layout.junk_account(validator)
    est = junk_est(spec, n_cap, g_cap)
    base = rnd * ID_STRIDE + _JUNK + validator * 1_000
    subs = tuple(
        _junk(base + k, account, spec.adversary_price, est, rnd, layout, "junk") for k in range(n_cap)
    )
    if is_proposer:
        return subs, lambda tx: tx.sender != account
    return subs, lambda tx: True
