"""Desk-scale adversarial-robustness evaluation harness.

Attack suite, defense-pathology model zoo, and an executable checklist of
sanity diagnostics over small from-scratch models.
"""

__version__ = "0.1.0"

from .errors import (
    AttackInapplicable,
    ConfigError,
    FormatError,
    GradientUnavailable,
    InitFailure,
    TrainingDiverged,
)
from .numerics import MlpParams, Rng, gradient_check, init_mlp, load_params, save_params, sgd_train
from .threat import ThreatModel, distance, project, sample_in_ball
from .models import ABSTAIN, build_model, make_reference

__all__ = [
    "__version__",
    "AttackInapplicable",
    "ConfigError",
    "FormatError",
    "GradientUnavailable",
    "InitFailure",
    "TrainingDiverged",
    "MlpParams",
    "Rng",
    "gradient_check",
    "init_mlp",
    "load_params",
    "save_params",
    "sgd_train",
    "ThreatModel",
    "distance",
    "project",
    "sample_in_ball",
    "ABSTAIN",
    "build_model",
    "make_reference",
]
