"""Communication-efficient distributed GNE seeking on aggregative games.

Players on a graph track the population aggregate with event-triggered,
stochastically quantized exchanges and run projected primal-dual steps on
their local estimates.
"""

from .compressor import PRESET_COMPRESSORS, QuantizerRangeError, StochasticQuantizer
from .config import ExperimentConfig, load_config, load_preset, resolve
from .engine import RunTrace, Setup, StepSchedule, run_algorithm1, run_baseline, validate_schedule
from .game import ENERGY_REFERENCE_GNE, GameSpec, energy_game, estimate_constants, multiplier_bound
from .network import build_complete, build_ring, mixing_matrix
from .trigger import TriggerSchedule

__version__ = "0.1.0"

__all__ = [
    "ENERGY_REFERENCE_GNE",
    "ExperimentConfig",
    "GameSpec",
    "QuantizerRangeError",
    "RunTrace",
    "Setup",
    "StepSchedule",
    "StochasticQuantizer",
    "PRESET_COMPRESSORS",
    "TriggerSchedule",
    "build_complete",
    "build_ring",
    "energy_game",
    "estimate_constants",
    "load_config",
    "load_preset",
    "mixing_matrix",
    "multiplier_bound",
    "resolve",
    "run_algorithm1",
    "run_baseline",
    "validate_schedule",
]
