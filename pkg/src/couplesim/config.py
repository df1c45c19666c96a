"""Scenario configuration: the ``SimConfig`` record, INI parsing and presets.

Scenario files are INI with five sections. Gas quantities are written in
whole units (``G = 2``, ``gas = 0.5``); times in milliseconds.

.. code-block:: ini

    [mode]
    mode = decoupled          ; coupled | decoupled | partial
    builder = greedy-est      ; knapsack | greedy-est | partial
    rounds = 30
    seed = 7                  ; mandatory
    lag = 2
    cost_model = current      ; current | full-estimate
    c_base = 0
    reorder_hot = false

    [timing]
    delta_e = 200
    delta_c = 600
    delta_b = 200
    exec_shift = 200          ; partial mode; defaults to delta_b

    [validators]
    n = 4
    g = 1
    rotation = round-robin    ; round-robin | uniform
    rational = 0              ; comma-separated validator indices
    byzantine =

    [workload]
    rate = 10
    gas = 1:1                 ; value:weight pairs, comma-separated
    est_factor =              ; empty for exact estimates
    price_min = 1
    price_max = 10
    hot_fraction = 0
    honest_balance = 1000000000000000
    honest_pool = 256

    [adversary]
    kind = gaslight           ; none | gaslight | fund-drain | rational
    attack_start = 3
    junk_est =                ; defaults to G/N
    price_premium = 1
    drain_offset = 2
    funding = 0
    shadow = 2
    trigger_initial = false
    skip_setup = false
    attack_txs = 1
    drain_gas = 10            ; micro-units
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .adversary import ADVERSARY_KINDS, AdversaryParams, ConfigError, Layout, WorkloadSpec
from .builders import BUILDERS, Mode
from .core import GAS_UNIT, gas_from
from .execution import CostKind, CostModel
from .protocol import TimingModel


class UnknownPreset(ConfigError):
    pass


_BUILDER_MODES = {
    Mode.COUPLED: ("knapsack",),
    Mode.DECOUPLED: ("greedy-est", "knapsack"),
    Mode.PARTIAL: ("partial",),
}


@dataclass(frozen=True)
class SimConfig:
    mode: str
    rounds: int
    n: int
    g_cap: int  # micro-gas
    seed: int
    timing: TimingModel = field(default_factory=TimingModel)
    lag: int = 2
    builder: str = "knapsack"
    cost_model: CostModel = field(default_factory=CostModel)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    rotation: str = "round-robin"
    rational: tuple[int, ...] = ()
    byzantine: tuple[int, ...] = ()
    exec_shift_ms: int | None = None
    reorder_hot: bool = False
    honest_pool: int = 256
    output: str | None = None

    def __post_init__(self) -> None:
        try:
            mode = Mode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}") from None
        if self.builder not in BUILDERS:
            raise ConfigError(f"unknown builder {self.builder!r}")
        if self.builder not in _BUILDER_MODES[mode]:
            raise ConfigError(f"builder {self.builder!r} does not fit mode {self.mode!r}")
        if self.rotation not in ("round-robin", "uniform"):
            raise ConfigError(f"unknown rotation {self.rotation!r}")
        if self.n < 1 or self.g_cap < 0 or self.rounds < 0 or self.lag < 0:
            raise ConfigError("n must be positive; rounds, lag and G non-negative")
        if self.honest_pool < 1:
            raise ConfigError("honest_pool must be positive")
        for v in self.rational + self.byzantine:
            if not 0 <= v < self.n:
                raise ConfigError(f"validator index {v} out of range")
        if set(self.rational) & set(self.byzantine):
            raise ConfigError("a validator cannot be both rational and byzantine")
        if self.workload.adversary.kind not in ADVERSARY_KINDS:
            raise ConfigError(f"unknown adversary kind {self.workload.adversary.kind!r}")
        if self.workload.price_min > self.workload.price_max or self.workload.price_min < 0:
            raise ConfigError("need 0 <= price_min <= price_max")

    @property
    def layout(self) -> Layout:
        return Layout(self.n, self.honest_pool)

    @property
    def g_units(self) -> Fraction:
        return Fraction(self.g_cap, GAS_UNIT)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def _unit_workload(rate: int, **kw) -> WorkloadSpec:
    return WorkloadSpec(rate=rate, gas_values=((GAS_UNIT, 1),), **kw)


def _presets() -> dict[str, SimConfig]:
    gaslight = AdversaryParams(kind="gaslight", attack_start=3)
    return {
        # knapsack builder on a congested unit-gas mempool
        "coupled-baseline": SimConfig(
            mode="coupled", rounds=200, n=20, g_cap=10 * GAS_UNIT, seed=1, builder="knapsack",
            workload=_unit_workload(12),
        ),
        # gaslighting a deterministic estimate-based builder two rounds ahead of execution
        "decoupled-gaslight": SimConfig(
            mode="decoupled", rounds=30, n=4, g_cap=GAS_UNIT, seed=1, lag=2, builder="greedy-est",
            workload=_unit_workload(10, adversary=gaslight),
        ),
        # emptying the adversary account before its charges land
        "decoupled-drain": SimConfig(
            mode="decoupled", rounds=12, n=4, g_cap=GAS_UNIT, seed=1, lag=2, builder="greedy-est",
            cost_model=CostModel(CostKind.FULL_ESTIMATE),
            workload=_unit_workload(10, price_max=9, adversary=AdversaryParams(
                kind="fund-drain", attack_start=4, funding=1000, junk_est=50,
            )),
        ),
        # one rational validator spamming gaslight junk under round-robin rotation
        "rational-fairness": SimConfig(
            mode="decoupled", rounds=40, n=4, g_cap=GAS_UNIT, seed=1, lag=2, builder="greedy-est",
            rational=(0,),
            workload=_unit_workload(10, price_min=5, price_max=5,
                                    adversary=AdversaryParams(kind="rational", trigger_initial=True)),
        ),
        # the same gaslight adversary against the conflict-aware builder
        "partial-secure": SimConfig(
            mode="partial", rounds=60, n=4, g_cap=GAS_UNIT, seed=1, builder="partial",
            workload=_unit_workload(10, price_min=5, price_max=5, adversary=gaslight),
        ),
        # every transaction touches one hot cell
        "partial-latency": SimConfig(
            mode="partial", rounds=200, n=8, g_cap=2 * GAS_UNIT, seed=1, builder="partial",
            workload=WorkloadSpec(rate=2, gas_values=((GAS_UNIT // 2, 1),), hot_fraction=Fraction(1)),
        ),
        # independent transactions, more than a block's worth every round
        "partial-throughput": SimConfig(
            mode="partial", rounds=100, n=8, g_cap=4 * GAS_UNIT, seed=1, builder="partial",
            workload=_unit_workload(10),
        ),
    }


PRESETS = _presets()


def preset(name: str) -> SimConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


# -- INI parsing --------------------------------------------------------------

def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _gas_values(text: str) -> tuple[tuple[int, int], ...]:
    pairs = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        value, _, weight = item.partition(":")
        pairs.append((gas_from(value), int(weight or 1)))
    if not pairs:
        raise ConfigError("workload.gas needs at least one value")
    for g, w in pairs:
        if not 0 <= g <= GAS_UNIT or w <= 0:
            raise ConfigError("gas values must lie in [0, 1] with positive weights")
    return tuple(pairs)


def _opt(sec: configparser.SectionProxy | None, key: str) -> str | None:
    if sec is None:
        return None
    v = sec.get(key)
    return v if v not in (None, "") else None


def _section(cp: configparser.ConfigParser, name: str) -> configparser.SectionProxy | None:
    return cp[name] if cp.has_section(name) else None


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse INI scenario text; keys missing from the text fall back to ``base``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"mode", "timing", "validators", "workload", "adversary"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    mode_s, timing_s = _section(cp, "mode"), _section(cp, "timing")
    val_s, wl_s, adv_s = _section(cp, "validators"), _section(cp, "workload"), _section(cp, "adversary")

    def get(sec, key, conv, default):
        raw = _opt(sec, key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None

    def boolean(raw: str) -> bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")

    seed = get(mode_s, "seed", int, None if base is None else base.seed)
    if seed is None:
        raise ConfigError("seed is mandatory")
    b = base
    timing = TimingModel(
        get(timing_s, "delta_e", int, b.timing.delta_e if b else 200),
        get(timing_s, "delta_c", int, b.timing.delta_c if b else 600),
        get(timing_s, "delta_b", int, b.timing.delta_b if b else 200),
    )
    n = get(val_s, "n", int, b.n if b else None)
    if n is None:
        raise ConfigError("validators.n is required")
    g_cap = get(val_s, "g", gas_from, b.g_cap if b else None)
    if g_cap is None:
        raise ConfigError("validators.g is required")

    bw = b.workload if b else WorkloadSpec()
    ba = bw.adversary
    adversary = AdversaryParams(
        kind=get(adv_s, "kind", str.strip, ba.kind),
        attack_start=get(adv_s, "attack_start", int, ba.attack_start),
        junk_est=get(adv_s, "junk_est", gas_from, ba.junk_est),
        price_premium=get(adv_s, "price_premium", int, ba.price_premium),
        drain_offset=get(adv_s, "drain_offset", int, ba.drain_offset),
        funding=get(adv_s, "funding", int, ba.funding),
        shadow=get(adv_s, "shadow", int, ba.shadow),
        trigger_initial=get(adv_s, "trigger_initial", boolean, ba.trigger_initial),
        skip_setup=get(adv_s, "skip_setup", boolean, ba.skip_setup),
        target_builder=get(adv_s, "target_builder", str.strip, ba.target_builder),
        attack_txs=get(adv_s, "attack_txs", int, ba.attack_txs),
        drain_gas=get(adv_s, "drain_gas", int, ba.drain_gas),
    )
    workload = WorkloadSpec(
        rate=get(wl_s, "rate", int, bw.rate),
        gas_values=get(wl_s, "gas", _gas_values, bw.gas_values),
        est_factor=get(wl_s, "est_factor", Fraction, bw.est_factor),
        price_min=get(wl_s, "price_min", int, bw.price_min),
        price_max=get(wl_s, "price_max", int, bw.price_max),
        hot_fraction=get(wl_s, "hot_fraction", Fraction, bw.hot_fraction),
        honest_balance=get(wl_s, "honest_balance", int, bw.honest_balance),
        adversary=adversary,
    )
    bc = b.cost_model if b else CostModel()
    try:
        cost_model = CostModel.parse(
            get(mode_s, "cost_model", str.strip, bc.kind.value), get(mode_s, "c_base", int, bc.c_base)
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        return SimConfig(
            mode=get(mode_s, "mode", str.strip, b.mode if b else "coupled"),
            rounds=get(mode_s, "rounds", int, b.rounds if b else 100),
            n=n, g_cap=g_cap, seed=seed, timing=timing,
            lag=get(mode_s, "lag", int, b.lag if b else 2),
            builder=get(mode_s, "builder", str.strip, b.builder if b else "knapsack"),
            cost_model=cost_model, workload=workload,
            rotation=get(val_s, "rotation", str.strip, b.rotation if b else "round-robin"),
            rational=get(val_s, "rational", _ints, b.rational if b else ()),
            byzantine=get(val_s, "byzantine", _ints, b.byzantine if b else ()),
            exec_shift_ms=get(timing_s, "exec_shift", int, b.exec_shift_ms if b else None),
            reorder_hot=get(mode_s, "reorder_hot", boolean, b.reorder_hot if b else False),
            honest_pool=get(wl_s, "honest_pool", int, b.honest_pool if b else 256),
            output=b.output if b else None,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> SimConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: SimConfig) -> str:
    """Render ``cfg`` as scenario-file text that ``parse_config`` reads back."""
    w, a = cfg.workload, cfg.workload.adversary

    def g(micro: int | None) -> str:
        if micro is None:
            return ""
        f = Fraction(micro, GAS_UNIT)
        return str(f.numerator) if f.denominator == 1 else str(micro / GAS_UNIT)

    def lst(xs) -> str:
        return ",".join(str(x) for x in xs)

    lines = [
        "[mode]",
        f"mode = {cfg.mode}", f"builder = {cfg.builder}", f"rounds = {cfg.rounds}", f"seed = {cfg.seed}",
        f"lag = {cfg.lag}", f"cost_model = {cfg.cost_model.kind.value}", f"c_base = {cfg.cost_model.c_base}",
        f"reorder_hot = {str(cfg.reorder_hot).lower()}",
        "", "[timing]",
        f"delta_e = {cfg.timing.delta_e}", f"delta_c = {cfg.timing.delta_c}", f"delta_b = {cfg.timing.delta_b}",
        f"exec_shift = {'' if cfg.exec_shift_ms is None else cfg.exec_shift_ms}",
        "", "[validators]",
        f"n = {cfg.n}", f"g = {g(cfg.g_cap)}", f"rotation = {cfg.rotation}",
        f"rational = {lst(cfg.rational)}", f"byzantine = {lst(cfg.byzantine)}",
        "", "[workload]",
        f"rate = {w.rate}", "gas = " + ",".join(f"{g(v)}:{wt}" for v, wt in w.gas_values),
        f"est_factor = {'' if w.est_factor is None else w.est_factor}",
        f"price_min = {w.price_min}", f"price_max = {w.price_max}", f"hot_fraction = {w.hot_fraction}",
        f"honest_balance = {w.honest_balance}", f"honest_pool = {cfg.honest_pool}",
        "", "[adversary]",
        f"kind = {a.kind}", f"attack_start = {a.attack_start}", f"junk_est = {g(a.junk_est)}",
        f"price_premium = {a.price_premium}", f"drain_offset = {a.drain_offset}", f"funding = {a.funding}",
        f"shadow = {a.shadow}", f"trigger_initial = {str(a.trigger_initial).lower()}",
        f"skip_setup = {str(a.skip_setup).lower()}", f"target_builder = {a.target_builder}",
        f"attack_txs = {a.attack_txs}", f"drain_gas = {a.drain_gas}",
    ]
    return "\n".join(lines) + "\n"
