"""Command-line entry point.

    couplesim sim run --preset decoupled-gaslight --out out/gaslight
    couplesim sim run --config scenario.ini --seed 3
    couplesim sim sweep --preset partial-secure --seeds 1-8 --threads 4
    couplesim trace stats trace.csv --beta 5
    couplesim trace econ --alpha 0.1 --factor 715

Exit codes: 0 ok, 1 usage or input error, 2 invariant violation during a run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import casestudy, metrics
from .adversary import ConfigError
from .core import gas_from
from .config import PRESETS, SimConfig, UnknownPreset, dump_config, load_config, preset
from .execution import CostModel, outcomes_csv
from .protocol import InvariantViolation, TimingModel, simulate

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2

_DEFAULT_BUILDER = {"coupled": "knapsack", "decoupled": "greedy-est", "partial": "partial"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fixture_trace() -> Path:
    return Path(str(resources.files("couplesim") / "data" / "fixture_trace.csv"))


# -- sim ----------------------------------------------------------------------

def _base_config(args) -> tuple[str, SimConfig]:
    if args.config:
        return Path(args.config).stem, load_config(args.config)
    return args.preset, preset(args.preset)


def apply_overrides(cfg: SimConfig, args) -> SimConfig:
    ch: dict = {}
    for name in ("seed", "rounds", "lag", "n"):
        v = getattr(args, name, None)
        if v is not None:
            ch[name] = v
    if args.g is not None:
        ch["g_cap"] = gas_from(args.g)
    if args.mode is not None:
        ch["mode"] = args.mode
        ch["builder"] = args.builder or _DEFAULT_BUILDER[args.mode]
    elif args.builder is not None:
        ch["builder"] = args.builder
    if args.cost_model is not None:
        ch["cost_model"] = CostModel.parse(args.cost_model, cfg.cost_model.c_base)
    if any(x is not None for x in (args.delta_e, args.delta_c, args.delta_b)):
        t = cfg.timing
        ch["timing"] = TimingModel(
            args.delta_e if args.delta_e is not None else t.delta_e,
            args.delta_c if args.delta_c is not None else t.delta_c,
            args.delta_b if args.delta_b is not None else t.delta_b,
        )
    if args.rotation is not None:
        ch["rotation"] = args.rotation
    return cfg.replace(**ch) if ch else cfg


def run_scenario(cfg: SimConfig, out_dir: Path | None) -> dict:
    """Run ``cfg`` and write rounds.csv, outcomes.csv, summary.json, fairness.json, report.txt."""
    run = simulate(cfg)
    bm = metrics.run_block_metrics(run, cfg.cost_model)
    summ = metrics.summary(run, bm)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "rounds.csv").write_text(metrics.rounds_csv(run, bm))
        (out_dir / "outcomes.csv").write_text(
            outcomes_csv((e.round, o) for e in run.entries for o in e.outcomes)
        )
        (out_dir / "summary.json").write_text(json.dumps(summ, indent=2) + "\n")
        fair = metrics.fairness(run)
        (out_dir / "fairness.json").write_text(json.dumps({
            "rewards": list(fair.rewards),
            "ratios": [[r if r != float("inf") else "inf" for r in row] for row in fair.ratios],
            "eps": float(fair.eps),
            "fair": fair.fair,
            "max_deviation": fair.max_deviation if fair.max_deviation != float("inf") else "inf",
            "rotations": fair.rotations,
            "long_enough": fair.long_enough,
        }, indent=2) + "\n")
        (out_dir / "report.txt").write_text(metrics.report(summ))
        (out_dir / "scenario.ini").write_text(dump_config(cfg))
    return summ


def _json_safe(d: dict) -> dict:
    return {k: ("inf" if v == float("inf") else v) for k, v in d.items()}


def cmd_sim_run(args) -> int:
    name, cfg = _base_config(args)
    cfg = apply_overrides(cfg, args)
    out = Path(args.out) if args.out else Path("out") / name
    summ = run_scenario(cfg, out)
    sys.stdout.write(metrics.report(_json_safe(summ)))
    sys.stdout.write(f"artifacts written to {out}\n")
    return EXIT_OK


def _seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        seeds.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


SWEEP_FIELDS = ("seed", "min_cr_res", "mean_cr_res", "attacked_blocks", "throughput_per_round",
                "adversary_charged", "uncollected_total", "fair")


def cmd_sim_sweep(args) -> int:
    name, cfg = _base_config(args)
    cfg = apply_overrides(cfg, args)
    try:
        seeds = _seeds(args.seeds)
    except ValueError as exc:
        raise ConfigError(f"bad --seeds: {exc}") from None
    out = Path(args.out) if args.out else Path("out") / f"{name}-sweep"
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(
            lambda s: run_scenario(cfg.replace(seed=s), out / f"seed-{s}"), seeds
        ))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for s, r in zip(seeds, results):
        w.writerow([s] + [r[k] for k in SWEEP_FIELDS[1:]])
    (out / "sweep.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- trace --------------------------------------------------------------------

def _econ_params(args) -> casestudy.EconParams:
    return casestudy.EconParams(
        total_rewards_usd=args.rewards_usd, alpha=args.alpha, factor=args.factor,
        priority_fee_gwei=args.priority_gwei, attack_tx_gas=args.attack_gas,
        blocks_per_year=args.blocks_per_year, eth_price_usd=args.eth_usd, silent_factor=args.silent_factor,
    )


def _print_table(rows: list[tuple[str, object]]) -> None:
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {v}")


def cmd_trace_stats(args) -> int:
    path = fixture_trace() if args.fixture else args.path
    if path is None:
        raise ConfigError("give a trace path or --fixture")
    trace = casestudy.ingest_trace(path)
    stats = casestudy.overestimation_stats(trace.rows)
    rep = {
        "trace": str(path),
        "rows": len(trace.rows),
        "excluded_rows": trace.excluded,
        "malformed_rows": trace.malformed,
        "stats": casestudy.stats_report(stats, Fraction(args.beta)),
        "economics": casestudy.econ_report(casestudy.attack_economics(_econ_params(args))),
    }
    out = Path(args.out) if args.out else None
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(rep, indent=2) + "\n")
    s = rep["stats"]
    rows = [("rows used", s["count"]), ("zero-use rows", s["zero_use_rows"]),
            ("excluded (used > limit)", trace.excluded), ("malformed", trace.malformed),
            ("mean overestimation %", f"{s['mean_overestimation_pct']:.4f}")]
    rows += [(f"{k} (ascending) %", f"{v:.4f}") for k, v in s["percentiles_ascending"].items()]
    rows += [(f"{k} (descending) %", f"{v:.4f}") for k, v in s["percentiles_descending"].items()]
    rows += [("effective beta (ratio of sums)", f"{s['effective_beta_ratio_of_sums']:.4f}"),
             ("effective beta (mean of ratios)", f"{s['effective_beta_mean_of_ratios']:.4f}")]
    _print_table(rows)
    return EXIT_OK


def cmd_trace_econ(args) -> int:
    r = casestudy.attack_economics(_econ_params(args))
    rep = casestudy.econ_report(r)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(rep, indent=2) + "\n")
    _print_table([
        ("captured rewards (USD)", f"{r.captured_rewards_usd:,.0f}"),
        ("attacker cost (ETH)", f"{r.attacker_cost_eth:,.2f}"),
        ("attacker cost (USD)", f"{r.attacker_cost_usd:,.0f}"),
        ("net (USD)", f"{r.net_usd:,.0f}"),
    ])
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
    src.add_argument("--config", help="INI scenario file")
    p.add_argument("--out", help="output directory (default out/<name>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--mode", choices=sorted(_DEFAULT_BUILDER))
    p.add_argument("--builder", choices=("knapsack", "greedy-est", "partial"))
    p.add_argument("--n", type=int, help="validator count and per-block transaction cap")
    p.add_argument("--g", help="block gas capacity in gas units")
    p.add_argument("--lag", type=int)
    p.add_argument("--cost-model", choices=("current", "full-estimate"))
    p.add_argument("--rotation", choices=("round-robin", "uniform"))
    p.add_argument("--delta-e", type=int)
    p.add_argument("--delta-c", type=int)
    p.add_argument("--delta-b", type=int)


def _add_econ_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rewards-usd", type=float, default=casestudy.DEFAULT_REWARDS_USD)
    p.add_argument("--alpha", type=float, default=casestudy.DEFAULT_ALPHA)
    p.add_argument("--factor", type=float, default=casestudy.DEFAULT_FACTOR)
    p.add_argument("--priority-gwei", type=float, default=casestudy.DEFAULT_PRIORITY_GWEI)
    p.add_argument("--attack-gas", type=int, default=casestudy.DEFAULT_ATTACK_GAS)
    p.add_argument("--blocks-per-year", type=int, default=casestudy.DEFAULT_BLOCKS_PER_YEAR)
    p.add_argument("--eth-usd", type=float, default=casestudy.DEFAULT_ETH_USD)
    p.add_argument("--silent-factor", type=float, default=1.0)
    p.add_argument("--out", help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="couplesim", description="Coupled / decoupled / partially coupled pipeline simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    top = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    sim = top.add_parser("sim", help="run scenarios")
    sim_sub = sim.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    run = sim_sub.add_parser("run", help="run one scenario")
    _add_sim_flags(run)
    run.set_defaults(func=cmd_sim_run)
    sweep = sim_sub.add_parser("sweep", help="run one scenario over several seeds")
    _add_sim_flags(sweep)
    sweep.add_argument("--seeds", default="1-4", help="e.g. 1-8 or 1,3,5")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.set_defaults(func=cmd_sim_sweep)

    tr = top.add_parser("trace", help="gas-limit overestimation analysis")
    tr_sub = tr.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    stats = tr_sub.add_parser("stats", help="overestimation statistics of a CSV trace")
    stats.add_argument("path", nargs="?")
    stats.add_argument("--fixture", action="store_true", help="use the bundled synthetic trace")
    stats.add_argument("--beta", default="5", help="speed-up before dilution")
    _add_econ_flags(stats)
    stats.set_defaults(func=cmd_trace_stats)
    econ = tr_sub.add_parser("econ", help="attack economics")
    _add_econ_flags(econ)
    econ.set_defaults(func=cmd_trace_econ)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except UnknownPreset as exc:
        print(f"UnknownPreset: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, casestudy.MalformedHeader, casestudy.NoUsableRows, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
