"""Shared attack machinery: goals, results, configs, query accounting.

Every attack consumes ``(classifier, threat model, goal, x, y, config, rng)``
and emits an AttackResult carrying the candidate input, verified success,
distortion, query/iteration counts, the loss trace, and a full echo of the
hyperparameters and seed so reports are reproducible from the result alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..models import ABSTAIN
from ..numerics import softmax_xent
from ..threat import distance

DISTANCE_SLACK = 1e-9  # tolerance when re-verifying the threat constraint


@dataclass(frozen=True)
class AttackGoal:
    """Success predicate: untargeted, targeted(t), or source_target(s, t)."""

    mode: str = "untargeted"
    target: int | None = None
    source: int | None = None

    def __post_init__(self):
        if self.mode not in ("untargeted", "targeted", "source_target"):
            raise ValueError(f"unknown goal mode {self.mode!r}")
        if self.mode in ("targeted", "source_target") and self.target is None:
            raise ValueError(f"{self.mode} goal requires a target class")
        if self.mode == "source_target" and self.source is None:
            raise ValueError("source_target goal requires a source class")

    def check_label(self, y):
        if self.mode in ("targeted", "source_target") and self.target == y:
            raise ValueError(f"target class {self.target} equals the true label")
        if self.mode == "source_target" and self.source != y:
            raise ValueError(f"source_target goal expects label {self.source}, got {y}")

    def succeeded(self, pred, y):
        """Abstention counts as defense success for every goal."""
        if pred == ABSTAIN:
            return False
        if self.mode == "untargeted":
            return pred != y
        return pred == self.target

    def to_config(self):
        d = {"mode": self.mode}
        if self.target is not None:
            d["target"] = self.target
        if self.source is not None:
            d["source"] = self.source
        return d


def goal_loss(goal, logits, y):
    """Loss-to-maximize and its dlogits for the given goal.

    Untargeted: cross-entropy of the true class (push confidence down).
    Targeted: negative cross-entropy of the target class (pull it up).
    """
    goal.check_label(y)
    if goal.mode == "untargeted":
        return softmax_xent(logits, y)
    loss, dlogits = softmax_xent(logits, goal.target)
    return -loss, -dlogits


@dataclass
class AttackConfig:
    """Every knob an attack reads; everything here is echoed into results."""

    iterations: int = 100
    step_size: float | None = None  # defaults to epsilon / 4 at attack time
    restarts: int = 1
    first_start_at_origin: bool = True
    eot_samples: int = 30
    batch_size: int = 128
    fd_delta: float = 0.01
    nes_sigma: float = 0.01
    coords_per_iter: int | None = None  # zoo_fd; None = all coordinates
    samples: int = 10000  # random search draws
    init_trials: int = 100  # boundary attack initialization
    eps_tol: float = 1e-3  # min-distortion bisection tolerance
    eps_max: float | None = None  # min-distortion search ceiling
    confidence_iters: int = 20  # transfer: extra iterations after first success
    spatial_max_rotation: float = 30.0
    spatial_rotation_step: float = 3.0
    spatial_max_shift: int = 3

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def step_for(self, tm):
        return self.step_size if self.step_size is not None else tm.epsilon / 4.0


@dataclass
class AttackResult:
    final_x: np.ndarray
    success: bool
    distortion: float
    queries: int
    iterations: int
    loss_trace: list = field(default_factory=list)
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    flags: list = field(default_factory=list)
    abstained: bool = False

    def to_dict(self):
        d = asdict(self)
        d["final_x"] = np.asarray(self.final_x).tolist()
        return d


class QueryCounter:
    """Counts logical model queries made by one attack invocation.

    Wrapping classifiers (e.g. expectation-over-randomness) declare a
    ``cost_per_query`` multiplier so ensembled calls are charged fairly.
    """

    def __init__(self, clf):
        self.clf = clf
        self.count = 0

    def _charge(self):
        self.count += self.clf.cost_per_query

    @property
    def num_classes(self):
        return self.clf.num_classes

    @property
    def has_gradients(self):
        return self.clf.has_gradients

    @property
    def randomness(self):
        return self.clf.randomness

    def logits(self, x, rng=None):
        self._charge()
        return self.clf.logits(x, rng=rng)

    def forward_backward(self, x, dlogits_fn, rng=None):
        self._charge()
        return self.clf.forward_backward(x, dlogits_fn, rng=rng)

    def predict(self, x, rng=None):
        self._charge()
        return self.clf.predict(x, rng=rng)

    def abstain_score(self, x, rng=None):
        return self.clf.abstain_score(x, rng=rng)


def evaluate_candidate(clf, goal, x, y, rng=None):
    """Predict once and apply the goal predicate; abstention is a failure."""
    pred = clf.predict(x, rng=rng)
    return goal.succeeded(pred, y), pred == ABSTAIN


def check_result(clf, tm, goal, x, y, result, rng=None, bounded=True):
    """Independent re-verification of an AttackResult.

    Never trusts the attack loop: recomputes the distance and re-runs the
    model on the final input.  Returns (constraint_ok, goal_ok).
    """
    dist = distance(tm, x, result.final_x)
    constraint_ok = (not bounded) or dist <= tm.epsilon + DISTANCE_SLACK
    goal_ok, _ = evaluate_candidate(clf, goal, result.final_x, y, rng=rng)
    return constraint_ok, goal_ok
