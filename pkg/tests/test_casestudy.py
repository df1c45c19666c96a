from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from couplesim.casestudy import (
    PERCENTILES, EconParams, MalformedHeader, NoUsableRows, TraceRow, attack_economics, ingest_trace,
    nearest_rank, overestimation_stats,
)
from couplesim.cli import fixture_trace

from oracles import nearest_rank_oracle


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_well_formed(tmp_path):
    tr = ingest_trace(write(tmp_path, "tx_id,gas_limit,gas_used\na,10,5\nb,3,3\nc,8,1\n"))
    assert len(tr.rows) == 3 and tr.warnings == 0
    assert tr.rows[0] == TraceRow("a", 10, 5)


def test_ingest_header_order_and_price(tmp_path):
    tr = ingest_trace(write(tmp_path, "gas_used,price,tx_id,gas_limit\n5,7,a,10\n"))
    assert tr.rows == [TraceRow("a", 10, 5, 7)]


def test_ingest_excludes_overuse(tmp_path):
    tr = ingest_trace(write(tmp_path, "tx_id,gas_limit,gas_used\na,10,5\nb,3,4\n"))
    assert len(tr.rows) == 1 and tr.excluded == 1 and tr.warnings == 1


def test_ingest_empty_and_malformed(tmp_path):
    assert ingest_trace(write(tmp_path, "tx_id,gas_limit,gas_used\n")).rows == []
    tr = ingest_trace(write(tmp_path, "tx_id,gas_limit,gas_used\na,x,1\nb,2,-1\nc,2,1\n"))
    assert len(tr.rows) == 1 and tr.malformed == 2
    with pytest.raises(MalformedHeader):
        ingest_trace(write(tmp_path, "id,limit,used\n1,2,3\n"))
    with pytest.raises(FileNotFoundError):
        ingest_trace(tmp_path / "missing.csv")


def test_demo_contract_ratio():
    s = overestimation_stats([TraceRow("demo", 715, 1)])
    assert s.mean_pct == 71_400
    assert s.mean_factor == 715


def test_exact_estimates():
    s = overestimation_stats([TraceRow(str(i), 5 + i, 5 + i) for i in range(7)])
    assert s.mean_pct == 0 and all(v == 0 for v in s.ascending.values())


def test_three_row_example():
    s = overestimation_stats([TraceRow("a", 2, 1), TraceRow("b", 3, 1), TraceRow("c", 4, 1)])
    assert s.mean_pct == 200 and s.ascending[50] == 200
    assert s.descending[10] == 300 and s.ascending[10] == 100


def test_zero_use_rows_are_separate():
    s = overestimation_stats([TraceRow("a", 2, 1), TraceRow("z", 5, 0)])
    assert s.count == 1 and s.zero_use == 1
    with pytest.raises(NoUsableRows):
        overestimation_stats([TraceRow("z", 5, 0)])


def test_effective_beta_variants():
    s = overestimation_stats([TraceRow("a", 2, 1), TraceRow("b", 10, 9)])
    assert s.effective_beta(5) == Fraction(5) * 10 / 12
    assert s.effective_beta_mean(5) == Fraction(5) / (1 + s.mean_pct / 100)


def test_fixture_trace_values():
    tr = ingest_trace(fixture_trace())
    assert (len(tr.rows), tr.excluded, tr.malformed) == (11, 1, 0)
    s = overestimation_stats(tr.rows)
    # per-row overestimation, worked out by hand
    by_hand = sorted(Fraction(x) for x in (0, 100, 200, 400, 71_400, 50, 25, 300, 0, 400))
    assert s.count == 10 and s.zero_use == 1
    assert s.mean_pct == sum(by_hand) / 10 == Fraction(14575, 2)
    assert [s.ascending[p] for p in PERCENTILES] == [0, 25, 100, 400, 400]


def test_percentiles_match_sort_oracle():
    rnd = random.Random(23)
    for _ in range(200):
        rows = [TraceRow(str(i), 0, rnd.randint(1, 500)) for i in range(rnd.randint(1, 100))]
        rows = [TraceRow(r.tx_id, r.gas_used + rnd.randint(0, 2000), r.gas_used) for r in rows]
        s = overestimation_stats(rows)
        vals = [Fraction(100 * (r.gas_limit - r.gas_used), r.gas_used) for r in rows]
        for p in PERCENTILES:
            assert s.ascending[p] == nearest_rank_oracle(vals, p)
            assert s.descending[p] == nearest_rank_oracle(vals, 100 - p)
        assert s.mean_pct == sum(vals) / len(vals)


@given(st.lists(st.tuples(st.integers(1, 50), st.integers(0, 200)), min_size=1, max_size=30), st.randoms())
def test_stats_are_permutation_invariant(pairs, r):
    rows = [TraceRow(str(i), u + extra, u) for i, (u, extra) in enumerate(pairs)]
    shuffled = rows[:]
    r.shuffle(shuffled)
    assert overestimation_stats(rows) == overestimation_stats(shuffled)


def test_nearest_rank_edges():
    vals = [Fraction(v) for v in (1, 2, 3, 4)]
    assert nearest_rank(vals, 25) == 1 and nearest_rank(vals, 26) == 2 and nearest_rank(vals, 100) == 4
    with pytest.raises(NoUsableRows):
        nearest_rank([], 50)


def test_economics_reference_values():
    r = attack_economics(EconParams(total_rewards_usd=352e6, alpha=0.10, factor=715))
    assert abs(r.captured_rewards_usd - 316e6) / 316e6 < 0.01
    c = attack_economics(EconParams(priority_fee_gwei=50, attack_tx_gas=50_000, blocks_per_year=2_600_000, alpha=0))
    assert c.attacker_cost_eth == 6500


def test_no_headroom_captures_nothing():
    assert attack_economics(EconParams(factor=1)).captured_rewards_usd == 0


@given(st.floats(1e3, 1e9), st.floats(0.1, 100), st.floats(0.5, 4))
def test_economics_homogeneous(rewards, fee, k):
    base = attack_economics(EconParams(total_rewards_usd=rewards, priority_fee_gwei=fee))
    scaled = attack_economics(EconParams(total_rewards_usd=rewards * k, priority_fee_gwei=fee * k))
    assert scaled.captured_rewards_usd == pytest.approx(base.captured_rewards_usd * k, rel=1e-12)
    assert scaled.attacker_cost_eth == pytest.approx(base.attacker_cost_eth * k, rel=1e-12)


def test_econ_params_validation():
    with pytest.raises(ValueError):
        EconParams(factor=0.5)
    with pytest.raises(ValueError):
        EconParams(alpha=1.5)
    with pytest.raises(ValueError):
        EconParams(priority_fee_gwei=-1)
