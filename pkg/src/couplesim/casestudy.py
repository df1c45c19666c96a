"""Gas-limit overestimation statistics over transaction traces, and the
economics of gaslighting a production chain.

Overestimation of a transaction is ``o = 100 * (limit - used) / used`` percent;
a transaction whose limit is ``f`` times its usage has ``o = 100 * (f - 1)``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

PERCENTILES = (10, 25, 50, 75, 90)
REQUIRED_COLUMNS = ("tx_id", "gas_limit", "gas_used")

# documented defaults for the economics model
DEFAULT_REWARDS_USD = 352e6
DEFAULT_ALPHA = 0.10
DEFAULT_FACTOR = 715.0
DEFAULT_PRIORITY_GWEI = 50.0
DEFAULT_ATTACK_GAS = 50_000
DEFAULT_BLOCKS_PER_YEAR = 2_600_000
# the ETH price implied by the reference figures ($29M for 6,500 ETH)
DEFAULT_ETH_USD = 29e6 / 6500


class MalformedHeader(ValueError):
    pass


class NoUsableRows(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TraceRow:
    tx_id: str
    gas_limit: int
    gas_used: int
    price: int | None = None


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)
    malformed: int = 0  # unparsable rows
    excluded: int = 0  # gas_used > gas_limit

    @property
    def warnings(self) -> int:
        return self.malformed + self.excluded


def _nonneg(text: str) -> int:
    v = int(text.strip())
    if v < 0:
        raise ValueError("negative value")
    return v


def ingest_trace(path: str | Path, fmt: str = "csv") -> Trace:
    """Read a trace export; columns are matched by header name in any order."""
    if fmt != "csv":
        raise ValueError(f"unsupported trace format {fmt!r}")
    out = Trace()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MalformedHeader(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        has_price = "price" in header
        for lineno, rec in enumerate(reader, start=2):
            try:
                price = rec.get("price") if has_price else None
                row = TraceRow(
                    tx_id=(rec["tx_id"] or "").strip(),
                    gas_limit=_nonneg(rec["gas_limit"]),
                    gas_used=_nonneg(rec["gas_used"]),
                    price=_nonneg(price) if price not in (None, "") else None,
                )
            except (TypeError, ValueError, AttributeError):
                out.malformed += 1
                log.warning("%s:%d: unparsable row skipped", path, lineno)
                continue
            if row.gas_used > row.gas_limit:
                out.excluded += 1
                log.warning("%s:%d: gas_used exceeds gas_limit, row excluded", path, lineno)
                continue
            out.rows.append(row)
    return out


def overestimation(row: TraceRow) -> Fraction:
    return Fraction(100 * (row.gas_limit - row.gas_used), row.gas_used)


def nearest_rank(sorted_values: Sequence[Fraction], pct: int) -> Fraction:
    """Nearest-rank percentile of an ascending sequence."""
    if not sorted_values:
        raise NoUsableRows("no values")
    rank = max(1, math.ceil(Fraction(pct, 100) * len(sorted_values)))
    return sorted_values[rank - 1]


@dataclass(frozen=True)
class OverestimationStats:
    count: int
    zero_use: int
    mean_pct: Fraction
    # "ascending": pK is the value K% of transactions are at or below;
    # "descending": pK is the value the top K% of transactions reach.
    ascending: dict[int, Fraction]
    descending: dict[int, Fraction]
    total_limit: int
    total_used: int

    @property
    def mean_factor(self) -> Fraction:
        return 1 + self.mean_pct / 100

    @property
    def aggregate_factor(self) -> Fraction:
        return Fraction(self.total_limit, self.total_used)

    @property
    def percentiles(self) -> dict[int, Fraction]:
        return self.ascending

    def effective_beta(self, beta_in: Fraction | int | float) -> Fraction:
        """Speed-up left when blocks are packed by declared gas: β·Σused/Σlimit."""
        return Fraction(beta_in) / self.aggregate_factor

    def effective_beta_mean(self, beta_in: Fraction | int | float) -> Fraction:
        """The same with the mean per-transaction factor instead of the ratio of sums."""
        return Fraction(beta_in) / self.mean_factor


def overestimation_stats(rows: Iterable[TraceRow]) -> OverestimationStats:
    rows = list(rows)
    usable = [r for r in rows if r.gas_used > 0]
    if not usable:
        raise NoUsableRows("no rows with positive gas_used")
    values = sorted(overestimation(r) for r in usable)
    n = len(values)
    return OverestimationStats(
        count=n,
        zero_use=len(rows) - n,
        mean_pct=sum(values, Fraction(0)) / n,
        ascending={p: nearest_rank(values, p) for p in PERCENTILES},
        descending={p: nearest_rank(values, 100 - p) for p in PERCENTILES},
        total_limit=sum(r.gas_limit for r in usable),
        total_used=sum(r.gas_used for r in usable),
    )


@dataclass(frozen=True)
class EconParams:
    total_rewards_usd: float = DEFAULT_REWARDS_USD
    alpha: float = DEFAULT_ALPHA
    factor: float = DEFAULT_FACTOR
    priority_fee_gwei: float = DEFAULT_PRIORITY_GWEI
    attack_tx_gas: int = DEFAULT_ATTACK_GAS
    blocks_per_year: int = DEFAULT_BLOCKS_PER_YEAR
    eth_price_usd: float = DEFAULT_ETH_USD
    silent_factor: float = 1.0

    def __post_init__(self) -> None:
        nums = (self.total_rewards_usd, self.priority_fee_gwei, self.attack_tx_gas, self.blocks_per_year,
                self.eth_price_usd, self.silent_factor)
        if any(x < 0 for x in nums):
            raise ValueError("economic parameters must be non-negative")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.factor < 1:
            raise ValueError("the overestimation factor must be at least 1")


@dataclass(frozen=True)
class EconReport:
    captured_rewards_usd: float
    attacker_cost_eth: float
    attacker_cost_usd: float
    net_usd: float


def attack_economics(p: EconParams) -> EconReport:
    """Rewards an adversary with stake ``alpha`` diverts by gaslighting every
    other proposer, against the priority fees it pays for one attack
    transaction in each of those blocks."""
    others = 1 - p.alpha
    captured = p.total_rewards_usd * others * (p.factor - 1) / p.factor * p.silent_factor
    cost_eth = p.priority_fee_gwei * p.attack_tx_gas * p.blocks_per_year * others / 1e9 * p.silent_factor
    cost_usd = cost_eth * p.eth_price_usd
    return EconReport(captured, cost_eth, cost_usd, captured - cost_usd)


def _fmt(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{float(f):.6g}"


def stats_report(stats: OverestimationStats, beta_in: Fraction = Fraction(5)) -> dict:
    return {
        "count": stats.count,
        "zero_use_rows": stats.zero_use,
        "mean_overestimation_pct": float(stats.mean_pct),
        "mean_overestimation_pct_exact": _fmt(stats.mean_pct),
        "mean_factor": float(stats.mean_factor),
        "aggregate_factor": float(stats.aggregate_factor),
        "percentiles_ascending": {f"p{k}": float(v) for k, v in stats.ascending.items()},
        "percentiles_descending": {f"p{k}": float(v) for k, v in stats.descending.items()},
        "beta_in": float(beta_in),
        "effective_beta_ratio_of_sums": float(stats.effective_beta(beta_in)),
        "effective_beta_mean_of_ratios": float(stats.effective_beta_mean(beta_in)),
    }


def econ_report(r: EconReport) -> dict:
    return {
        "captured_rewards_usd": r.captured_rewards_usd,
        "attacker_cost_eth": r.attacker_cost_eth,
        "attacker_cost_usd": r.attacker_cost_usd,
        "net_usd": r.net_usd,
    }
