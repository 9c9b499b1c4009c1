"""Self-triggered control plants co-simulated over a power-minimizing
OFDMA cell: plant models, the self-triggered sampler, the network model,
the per-epoch allocation solver with its exhaustive oracle, and the
discrete-event engine tying them together."""

from .config import ScenarioConfig, bundled_scenario, emit_config, parse_config
from .engine import (
    MetricsReport,
    run_periodic_baseline,
    run_scenario,
    sweep_weight,
)
from .plant import DisturbancePath, PlantModel, PlantState, pole_place

__version__ = "0.1.0"

__all__ = [
    "DisturbancePath",
    "MetricsReport",
    "PlantModel",
    "PlantState",
    "ScenarioConfig",
    "bundled_scenario",
    "emit_config",
    "parse_config",
    "pole_place",
    "run_periodic_baseline",
    "run_scenario",
    "sweep_weight",
    "__version__",
]
