"""Scoring world-model path plans against ground-truth robot trajectories."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConfigError,
    MetricConfig,
    Pose,
    Scenario,
    ScenarioResult,
    Trajectory,
    Trajectory2D,
    validate_config,
)
from .metrics import (  # noqa: E402
    ade,
    approach_consistency,
    build_corridor,
    evaluate_scenario,
    fde,
    miss_rate,
    soft_endpoint,
    weighted_overall,
)

__all__ = [
    "ConfigError", "MetricConfig", "Pose", "Scenario", "ScenarioResult", "Trajectory",
    "Trajectory2D", "validate_config", "ade", "approach_consistency", "build_corridor",
    "evaluate_scenario", "fde", "miss_rate", "soft_endpoint", "weighted_overall",
]
