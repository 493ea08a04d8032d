"""Policy-gradient toolkit with power-mean corrected multiple importance weighting."""

from .algo import LearningCurve, RunConfig, run
from .coefficients import MpmCoefficients, adaptive_schedule, rpgth_schedule, thm61_schedule
from .estimators import GradientEstimate, bh_estimate, miw_constant_estimate, mpm_estimate

__version__ = "0.1.0"

__all__ = [
    "GradientEstimate",
    "LearningCurve",
    "MpmCoefficients",
    "RunConfig",
    "adaptive_schedule",
    "bh_estimate",
    "miw_constant_estimate",
    "mpm_estimate",
    "rpgth_schedule",
    "run",
    "thm61_schedule",
]
