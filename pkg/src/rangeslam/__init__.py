"""Range-only inertial SLAM with an equivariant filter and an EKF baseline."""

from .ekf import EkfNoise, RangeEKF
from .eqf import EquivariantFilter, FilterError, NoiseConfig
from .evaluation import evaluate_run, umeyama_align
from .runner import RunResult, run_filter
from .sim import SensorSpec, TrajectorySpec, aerial_scenario, generate

__all__ = [
    "EkfNoise",
    "EquivariantFilter",
    "FilterError",
    "NoiseConfig",
    "RangeEKF",
    "RunResult",
    "SensorSpec",
    "TrajectorySpec",
    "aerial_scenario",
    "evaluate_run",
    "generate",
    "run_filter",
    "umeyama_align",
]
