"""earl: energy-aware antenna activation for cell-free massive MIMO downlink.

Simulator (correlated channels, MMSE estimation/precoding, hardening-bound
SE), an end-to-end power model for O-RAN functional splits 8 and 7.1, and
three activation controllers: a gain-proportional heuristic, a PPO policy,
and PPO followed by greedy refinement.
"""

from .scenario import (
    ConfigurationError,
    Deployment,
    PowerConstants,
    Scenario,
    Split,
    build_deployment,
    load_scenario,
    save_scenario,
)
from .channel import ChannelRealizationSet, generate_channel_set
from .downlink import (
    EvaluationResult,
    InfeasibleActivationError,
    PrecodingSolution,
    evaluate,
    precode,
)
from .powermodel import GopsReport, PowerBreakdown, gops, total_power
from .heuristic import heuristic_allocate

__version__ = "0.1.0"

__all__ = [
    "ChannelRealizationSet",
    "ConfigurationError",
    "Deployment",
    "EvaluationResult",
    "GopsReport",
    "InfeasibleActivationError",
    "PowerBreakdown",
    "PowerConstants",
    "PrecodingSolution",
    "Scenario",
    "Split",
    "build_deployment",
    "evaluate",
    "generate_channel_set",
    "gops",
    "heuristic_allocate",
    "load_scenario",
    "precode",
    "save_scenario",
    "total_power",
]
