from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from couplesim.core import (
    GAS_UNIT, MAX_GUARDS, Block, Guard, Mempool, StateSnapshot, Step, Transaction, Transfer, Verdict,
    WriteCell, actual_access_sets, dump_state, dump_transactions, gas_from, gas_to_fraction,
    load_state, load_transactions, max_path_gas, run_program, validate_transaction,
)
from couplesim.execution import gas_actual

from conftest import unit_tx

SIZE = 16


def test_gas_fixed_point():
    assert gas_from("0.25") == 250_000
    assert gas_from(1) == GAS_UNIT
    assert gas_from(0.4) == 400_000
    assert gas_to_fraction(500_000) * 2 == 1
    with pytest.raises(ValueError):
        gas_from("0.0000001")


def test_guard_comparators():
    assert Guard(1, "<", 5).holds(4) and not Guard(1, "<", 5).holds(5)
    assert Guard(1, "<=", 5).holds(5)
    assert Guard(1, "=", 5).holds(5) and not Guard(1, "=", 5).holds(6)
    assert Guard(1, ">=", 5).holds(5)
    assert Guard(1, ">", 5).holds(6) and not Guard(1, ">", 5).holds(5)
    with pytest.raises(ValueError):
        Guard(1, "!=", 5)


def test_validate_full_unit_step_is_ok():
    tx = Transaction(1, 0, 1, GAS_UNIT, (Step(GAS_UNIT),))
    assert validate_transaction(tx, SIZE) is Verdict.OK


def test_validate_two_large_steps_exceed_one():
    tx = Transaction(1, 0, 1, GAS_UNIT, (Step(600_000), Step(600_000)))
    assert validate_transaction(tx, SIZE) is Verdict.PATH_GAS_EXCEEDS_ONE


def test_validate_estimate_out_of_range():
    tx = Transaction(1, 0, 1, GAS_UNIT + 1, (Step(10),))
    assert validate_transaction(tx, SIZE) is Verdict.ESTIMATE_OUT_OF_RANGE


def test_validate_address_out_of_bounds():
    tx = Transaction(1, 0, 1, 10, (Step(10, None, (WriteCell(SIZE, 1),)),))
    assert validate_transaction(tx, SIZE) is Verdict.ADDRESS_OUT_OF_BOUNDS


def test_validate_too_many_guards():
    steps = tuple(Step(0, Guard(1, ">=", 0)) for _ in range(MAX_GUARDS + 1))
    assert validate_transaction(Transaction(1, 0, 1, 0, steps), SIZE) is Verdict.TOO_MANY_GUARDS
    steps = steps[:MAX_GUARDS]
    assert validate_transaction(Transaction(1, 0, 1, 0, steps), SIZE) is Verdict.OK


def test_validate_guarded_halt_does_not_shorten_worst_path():
    # the cheap exit may not be taken, so the expensive tail counts
    tx = Transaction(1, 0, 1, GAS_UNIT, (Step(0, Guard(1, ">=", 1), halt=True), Step(GAS_UNIT)))
    assert validate_transaction(tx, SIZE) is Verdict.OK
    tx = Transaction(1, 0, 1, GAS_UNIT, (Step(1, Guard(1, ">=", 1), halt=True), Step(GAS_UNIT)))
    assert validate_transaction(tx, SIZE) is Verdict.PATH_GAS_EXCEEDS_ONE


def test_access_sets_empty_program():
    tx = Transaction(1, 3, 1, 0)
    assert actual_access_sets(tx, StateSnapshot()) == ({3}, {3})


def test_access_sets_true_guard():
    tx = Transaction(1, 0, 1, 10, (Step(10, Guard(100, ">", 0), (WriteCell(200, 7),)),))
    reads, writes = actual_access_sets(tx, StateSnapshot({100: 1}))
    assert 100 in reads and 200 in writes


def test_access_sets_false_guard():
    # three-cell state; the guard reads cell 2 and fails, so nothing is written
    tx = Transaction(1, 0, 1, 10, (Step(10, Guard(2, "=", 9), (WriteCell(1, 7),)),))
    reads, writes = actual_access_sets(tx, StateSnapshot({0: 5, 1: 0, 2: 3}))
    assert reads == {0, 2}
    assert writes == {0}


def test_transfer_touches_both_balances():
    tx = Transaction(1, 0, 1, 10, (Step(10, None, (Transfer(1, 4),)),))
    tr = run_program(tx, StateSnapshot({0: 10}).get)
    assert tr.writes == {0, 1}
    assert dict(tr.delta) == {0: 6, 1: 4}


def test_transfer_clamped_to_balance():
    tx = Transaction(1, 0, 1, 10, (Step(10, None, (Transfer(1, 40),)),))
    assert dict(run_program(tx, StateSnapshot({0: 10}).get).delta) == {0: 0, 1: 10}


def test_effects_visible_to_later_guards():
    tx = Transaction(1, 0, 1, GAS_UNIT, (
        Step(0, None, (WriteCell(5, 1),)),
        Step(100, Guard(5, "=", 1), (WriteCell(6, 2),)),
    ))
    tr = run_program(tx, StateSnapshot().get)
    assert tr.gas == 100 and dict(tr.delta) == {5: 1, 6: 2}


def test_state_snapshot_value_semantics():
    a = StateSnapshot({1: 2, 3: 0}, 4)
    assert a.cells == {1: 2}
    assert a[7] == 0
    b = a.updated({1: 5})
    assert a[1] == 2 and b[1] == 5 and b.settled_round == 4
    assert StateSnapshot({1: 2}, 4) == a


def test_mempool_update_rule():
    t1, t2, t3 = unit_tx(1), unit_tx(2), unit_tx(3)
    m = Mempool.of([t1, t2])
    m2 = m.advance(Block(0, 0, (t1,)), [t3])
    assert [t.id for t in m2.txs()] == [2, 3]
    assert [t.id for t in m.txs()] == [1, 2]
    with pytest.raises(ValueError):
        m2.advance((), [t2])


def test_block_write_union():
    b = Block(0, 0, (), declared_writes={1: frozenset({1, 2}), 2: frozenset({3})})
    assert b.declared_write_union == {1, 2, 3}
    assert Block(0, 0).declared_write_union == frozenset()


def test_text_round_trip():
    txs = [
        Transaction(7, 2, 3, 250_000, (
            Step(0, Guard(9, ">=", 1), (), halt=True),
            Step(250_000, Guard(4, "<", -3), (WriteCell(5, -8), Transfer(1, 12))),
            Step(0),
        ), frozenset({2, 9, 4}), frozenset({2, 5, 1}), submit_round=4, origin="gaslight"),
        Transaction(8, 1, 0, 0),
    ]
    assert load_transactions(dump_transactions(txs)) == txs
    s = StateSnapshot({1: 5, 9: -2}, 3)
    assert load_state(dump_state(s)) == s


# -- properties ---------------------------------------------------------------

ADDR = st.integers(0, 7)
guards = st.one_of(st.none(), st.builds(Guard, ADDR, st.sampled_from(["<", "<=", "=", ">=", ">"]), st.integers(-2, 2)))
effects = st.lists(st.one_of(st.builds(WriteCell, ADDR, st.integers(-2, 2)), st.builds(Transfer, ADDR, st.integers(0, 3))), max_size=2)
steps = st.builds(lambda g, c, e, h: Step(c, g, tuple(e), h), guards, st.integers(0, 400_000), effects, st.booleans())
programs = st.lists(steps, max_size=6)
states = st.dictionaries(ADDR, st.integers(-2, 4), max_size=8)


def brute_max_path(steps_) -> int:
    """Enumerate every guard outcome (2^g paths) and take the worst gas."""
    guarded = [i for i, s in enumerate(steps_) if s.guard is not None]
    worst = 0
    for outcome in itertools.product((False, True), repeat=len(guarded)):
        holds = dict(zip(guarded, outcome))
        gas = 0
        for i, s in enumerate(steps_):
            gas += s.gas_cost
            ok = s.guard is None or holds[i]
            if ok and s.halt:
                break
        worst = max(worst, gas)
    return worst


@given(programs)
def test_max_path_gas_matches_enumeration(prog):
    assert max_path_gas(prog) == brute_max_path(prog)


@given(programs, states)
def test_path_gas_soundness(prog, cells):
    tx = Transaction(1, 0, 1, 0, tuple(prog))
    if validate_transaction(tx, 8) is Verdict.OK:
        assert gas_actual(tx, StateSnapshot(cells)) <= GAS_UNIT
    assert gas_actual(tx, StateSnapshot(cells)) <= max_path_gas(prog)


@given(programs, states)
def test_access_sets_deterministic(prog, cells):
    tx = Transaction(1, 0, 1, 0, tuple(prog))
    s = StateSnapshot(cells)
    assert actual_access_sets(tx, s) == actual_access_sets(tx, StateSnapshot(dict(cells)))


@given(programs, states, st.dictionaries(ADDR, st.integers(-5, 5)))
def test_access_set_soundness(prog, cells, noise):
    tx = Transaction(1, 0, 1, 0, tuple(prog))
    s = StateSnapshot(cells)
    reads, writes = actual_access_sets(tx, s)
    mutated = s.updated({a: v for a, v in noise.items() if a not in reads})
    r2, w2 = actual_access_sets(tx, mutated)
    assert (r2, w2) == (reads, writes)
    assert gas_actual(tx, mutated) == gas_actual(tx, s)
