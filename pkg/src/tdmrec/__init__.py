"""Capacity-aware location recommendation for travel demand management."""

__version__ = "0.1.0"

from .errors import TdmError  # noqa: E402
from .network import BprParams, RoadLink, RoadNetwork, bpr_time, delay  # noqa: E402
from .optimizer import (CapacityProfile, ChoiceBundle, RecommendationPlan, Traveler,  # noqa: E402
                        optimize, preference_only)
from .preference import Hyperparams, PreferenceModel, fit  # noqa: E402
from .scenario import ScenarioConfig, ScenarioResult, simulate, sweep_compliance, sweep_theta  # noqa: E402

__all__ = [
    "BprParams", "CapacityProfile", "ChoiceBundle", "Hyperparams", "PreferenceModel",
    "RecommendationPlan", "RoadLink", "RoadNetwork", "ScenarioConfig", "ScenarioResult", "TdmError",
    "Traveler", "bpr_time", "delay", "fit", "optimize", "preference_only", "simulate",
    "sweep_compliance", "sweep_theta",
]
