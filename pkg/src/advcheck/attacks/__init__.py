"""Attack suite: white-box, gradient-free, hard-label, spatial, wrappers."""

from .base import (
    AttackConfig,
    AttackGoal,
    AttackResult,
    QueryCounter,
    check_result,
    evaluate_candidate,
    goal_loss,
)
from .estimator import fd_gradient, nes, nes_gradient, spsa, spsa_gradient, zoo_fd
from .gradient import fgsm, min_distortion, pgd
from .hardlabel import boundary_attack, random_search
from .spatial import gaussian_noise_curve, spatial_bruteforce, transform_grid_image
from .wrappers import bpda_wrap, eot_wrap, transfer_attack

__all__ = [
    "AttackConfig",
    "AttackGoal",
    "AttackResult",
    "QueryCounter",
    "check_result",
    "evaluate_candidate",
    "goal_loss",
    "fgsm",
    "pgd",
    "min_distortion",
    "spsa",
    "nes",
    "zoo_fd",
    "spsa_gradient",
    "nes_gradient",
    "fd_gradient",
    "boundary_attack",
    "random_search",
    "spatial_bruteforce",
    "gaussian_noise_curve",
    "transform_grid_image",
    "eot_wrap",
    "bpda_wrap",
    "transfer_attack",
]
