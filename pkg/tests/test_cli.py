from __future__ import annotations

import json

import pytest

from couplesim.adversary import ConfigError
from couplesim.cli import main
from couplesim.config import PRESETS, UnknownPreset, dump_config, parse_config, preset
from couplesim.core import GAS_UNIT
from couplesim.execution import CostKind

SCENARIO = """
[mode]
mode = decoupled
builder = greedy-est
rounds = 12
seed = 5
cost_model = full-estimate

[timing]
delta_e = 250
delta_c = 600
delta_b = 150

[validators]
n = 4
g = 1
rational = 0

[workload]
rate = 6
gas = 1:1, 0.5:3

[adversary]
kind = rational
trigger_initial = true
"""


def test_parse_config():
    cfg = parse_config(SCENARIO)
    assert cfg.mode == "decoupled" and cfg.rounds == 12 and cfg.seed == 5
    assert cfg.g_cap == GAS_UNIT and cfg.rational == (0,)
    assert cfg.workload.gas_values == ((GAS_UNIT, 1), (GAS_UNIT // 2, 3))
    assert cfg.cost_model.kind is CostKind.FULL_ESTIMATE
    assert cfg.timing.delta_e == 250


def test_seed_is_mandatory():
    with pytest.raises(ConfigError, match="seed"):
        parse_config(SCENARIO.replace("seed = 5\n", ""))


@pytest.mark.parametrize("bad", [
    ("mode = decoupled", "mode = sideways"),
    ("builder = greedy-est", "builder = partial"),
    ("kind = rational", "kind = chaos"),
    ("rate = 6", "rate = lots"),
    ("[adversary]", "[bogus]"),
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        parse_config(SCENARIO.replace(*bad))


def test_dump_round_trip():
    for cfg in PRESETS.values():
        assert parse_config(dump_config(cfg)) == cfg


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        preset("nope")


def test_cli_unknown_preset_exits_nonzero(capsys):
    assert main(["sim", "run", "--preset", "nope"]) == 1
    assert "UnknownPreset" in capsys.readouterr().err


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["sim", "fly"])
    assert exc.value.code == 1


def test_cli_run_writes_artifacts(tmp_path):
    out = tmp_path / "g"
    assert main(["sim", "run", "--preset", "decoupled-gaslight", "--out", str(out)]) == 0
    for name in ("rounds.csv", "outcomes.csv", "summary.json", "fairness.json", "report.txt", "scenario.ini"):
        assert (out / name).exists()
    summ = json.loads((out / "summary.json").read_text())
    assert summ["attacked_max_cr_res"] == "0" and summ["adversary_charged"] == 0


def test_cli_coupled_baseline_summary(tmp_path):
    assert main(["sim", "run", "--preset", "coupled-baseline", "--rounds", "40", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["min_cr_res"] == "1"


def test_cli_runs_are_byte_identical(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SCENARIO)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sim", "run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["sim", "run", "--config", str(cfg), "--out", str(b)]) == 0
    for name in ("rounds.csv", "outcomes.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_overrides(tmp_path):
    assert main(["sim", "run", "--preset", "partial-throughput", "--rounds", "5", "--mode", "decoupled",
                 "--lag", "1", "--out", str(tmp_path)]) == 0
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["mode"] == "decoupled" and summ["rounds"] == 5 and summ["lag"] == 1


def test_cli_invariant_violation_exit_code(tmp_path, monkeypatch):
    from couplesim import protocol

    def boom(self, block, st):
        raise protocol.InvariantViolation("forced")

    monkeypatch.setattr(protocol._Driver, "_check_block", boom)
    assert main(["sim", "run", "--preset", "coupled-baseline", "--rounds", "2", "--out", str(tmp_path)]) == 2


def test_cli_sweep(tmp_path):
    assert main(["sim", "sweep", "--preset", "partial-secure", "--rounds", "8", "--seeds", "1-3",
                 "--threads", "3", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("seed,")


def test_trace_stats_fixture(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["trace", "stats", "--fixture", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["stats"]["mean_overestimation_pct"] == 7287.5
    assert rep["stats"]["percentiles_ascending"]["p50"] == 100
    assert rep["excluded_rows"] == 1
    assert "mean overestimation" in capsys.readouterr().out


def test_trace_econ_flags(tmp_path):
    out = tmp_path / "e.json"
    assert main(["trace", "econ", "--alpha", "0.10", "--factor", "715", "--rewards-usd", "352e6",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert abs(rep["captured_rewards_usd"] - 316e6) / 316e6 < 0.01


def test_trace_missing_file(capsys):
    assert main(["trace", "stats", "/definitely/missing.csv"]) == 1
    assert "FileNotFound" in capsys.readouterr().err
