"""Deterministic simulator of a two-tier PoW ledger with a centralized
mining pool, cost-metered oracles, a deviation-strategy catalogue, and
closed-form equilibrium bound analysis."""

from .params import ProtocolParams
from .engine import Engine, ExecutionConfig, run, measure_statistics
from .adversary import (
    Deviation,
    Strategy,
    underquery_then_exit_strategy,
    reordering_adversary,
    is_otx_respecting,
)
from .accounting import coalition_utility, rewards_in_view, u_min_max
from .analysis import (
    bound_report,
    chernoff_lower,
    chernoff_upper,
    compliant_profit_floor,
    deviation_profit_ceiling,
    evp_verdict,
    equilibrium_slack,
)
from .transcript import ExecutionTranscript, validate_transcript

__all__ = [
    "ProtocolParams",
    "Engine",
    "ExecutionConfig",
    "run",
    "measure_statistics",
    "Deviation",
    "Strategy",
    "underquery_then_exit_strategy",
    "reordering_adversary",
    "is_otx_respecting",
    "coalition_utility",
    "rewards_in_view",
    "u_min_max",
    "bound_report",
    "chernoff_lower",
    "chernoff_upper",
    "compliant_profit_floor",
    "deviation_profit_ceiling",
    "evp_verdict",
    "equilibrium_slack",
    "ExecutionTranscript",
    "validate_transcript",
]
