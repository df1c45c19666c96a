"""Discrete-round simulator of coupled, decoupled and partially coupled
blockchain pipelines, with gaslighting adversaries and trace analytics."""

from .core import GAS_UNIT, Block, Mempool, StateSnapshot, Step, Transaction
from .config import PRESETS, SimConfig, preset
from .protocol import RunRecord, TimingModel, beta, run_coupled, run_decoupled, run_partial, simulate

__all__ = [
    "GAS_UNIT", "Block", "Mempool", "StateSnapshot", "Step", "Transaction",
    "PRESETS", "SimConfig", "preset",
    "RunRecord", "TimingModel", "beta", "run_coupled", "run_decoupled", "run_partial", "simulate",
]
