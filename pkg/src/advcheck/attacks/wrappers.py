"""Attack-side model transforms: EOT, BPDA, and the transfer driver.

These never look at defense internals beyond declared interfaces: EOT
needs a RandomnessSpec, BPDA needs an exposed preprocessor boundary.
"""

from __future__ import annotations

import numpy as np

from ..models import Classifier
from ..threat import distance
from .base import AttackConfig, AttackResult, QueryCounter, evaluate_candidate, goal_loss
from .gradient import _grad_step_direction, _hyper
from ..threat import project


class EotClassifier(Classifier):
    """Deterministic-in-expectation view of a randomized model.

    Logits are the mean over k independent randomness draws; the input
    gradient is the mean of per-draw gradients.  Query cost multiplies by k.
    """

    def __init__(self, inner, samples):
        if samples <= 0:
            raise ValueError("eot sample count must be positive")
        if inner.randomness is None:
            raise ValueError("eot requires a model with a RandomnessSpec")
        self.inner = inner
        self.samples = int(samples)
        self.num_classes = inner.num_classes
        self.input_dim = inner.input_dim
        self.cost_per_query = self.samples * inner.cost_per_query

    @property
    def has_gradients(self):
        return self.inner.has_gradients

    def logits(self, x, rng=None):
        draws = rng.fork_many(self.samples) if rng else [None] * self.samples
        acc = None
        for r in draws:
            z = self.inner.logits(x, rng=r)
            acc = z if acc is None else acc + z
        return acc / self.samples

    def forward_backward(self, x, dlogits_fn, rng=None):
        draws = rng.fork_many(self.samples) if rng else [None] * self.samples
        # forward: mean logits; backward: mean of per-draw VJPs at the shared cotangent
        per_draw = [self.inner.logits(x, rng=r) for r in draws]
        mean_logits = sum(per_draw) / self.samples
        dlogits = np.asarray(dlogits_fn(mean_logits), dtype=np.float64)
        grad = None
        for r in rng.fork_many(self.samples) if rng else [None] * self.samples:
            _, g = self.inner.forward_backward(x, lambda _z: dlogits, rng=r)
            grad = g if grad is None else grad + g
        return mean_logits, grad / self.samples


def eot_wrap(clf, samples):
    return EotClassifier(clf, samples)


class BpdaClassifier(Classifier):
    """Exact forward through a preprocessor, surrogate Jacobian backward.

    The wrapped model must expose ``preprocess``; the default surrogate is
    the identity (valid whenever preprocess(x) is approximately x).  A
    custom surrogate maps ``(x, grad_at_preprocessed) -> grad_at_x``.
    """

    def __init__(self, clf, surrogate="identity"):
        if not hasattr(clf, "preprocess") or not hasattr(clf, "inner"):
            raise ValueError("bpda requires a model exposing a preprocessor boundary")
        self.wrapped = clf
        self.surrogate = surrogate
        self.num_classes = clf.num_classes
        self.input_dim = clf.input_dim
        self.cost_per_query = clf.cost_per_query

    @property
    def has_gradients(self):
        return self.wrapped.inner.has_gradients

    @property
    def randomness(self):
        return self.wrapped.randomness

    def logits(self, x, rng=None):
        return self.wrapped.logits(x, rng=rng)

    def predict(self, x, rng=None):
        return self.wrapped.predict(x, rng=rng)

    def abstain_score(self, x, rng=None):
        return self.wrapped.abstain_score(x, rng=rng)

    def forward_backward(self, x, dlogits_fn, rng=None):
        z = self.wrapped.preprocess(np.asarray(x, dtype=np.float64))
        logits, grad_z = self.wrapped.inner.forward_backward(z, dlogits_fn, rng=rng)
        if self.surrogate == "identity":
            grad_x = grad_z
        else:
            grad_x = self.surrogate(x, grad_z)
        return logits, grad_x


def bpda_wrap(clf, surrogate="identity"):
    return BpdaClassifier(clf, surrogate)


def transfer_attack(substitute, target, tm, goal, x, y, cfg=None, rng=None):
    """Craft on the substitute, spend exactly one query on the target.

    Runs projected gradient ascent on the substitute; once the substitute
    is fooled, continues for ``cfg.confidence_iters`` extra iterations to
    push the adversarial example to high confidence before transferring.
    """
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    sub_counter = QueryCounter(substitute)
    tgt_counter = QueryCounter(target)
    step = cfg.step_for(tm)
    seed = rng.seed if rng else 0

    losses = {}

    def dlogits_fn(logits):
        loss, d = goal_loss(goal, logits, y)
        losses["loss"] = loss
        return d

    z = x.copy()
    trace = []
    extra_left = None
    iterations = 0
    for t in range(cfg.iterations + cfg.confidence_iters):
        logits, g = sub_counter.forward_backward(z, dlogits_fn, rng=rng.fork() if rng else None)
        trace.append(losses["loss"])
        iterations += 1
        if extra_left is None and goal.succeeded(int(np.argmax(logits)), y):
            extra_left = cfg.confidence_iters
        if extra_left is not None:
            if extra_left == 0:
                break
            extra_left -= 1
        elif t + 1 >= cfg.iterations:
            break
        z = project(tm, x, z + step * _grad_step_direction(tm, g))

    success, abstained = evaluate_candidate(
        tgt_counter, goal, z, y, rng=rng.fork() if rng else None
    )
    return AttackResult(
        final_x=z,
        success=success,
        distortion=distance(tm, x, z),
        queries=tgt_counter.count,
        iterations=iterations,
        loss_trace=trace,
        hyperparams=_hyper(
            "transfer",
            tm,
            cfg,
            seed,
            goal=goal.to_config(),
            iterations=cfg.iterations,
            confidence_iters=cfg.confidence_iters,
            step_size=step,
            substitute_queries=sub_counter.count,
        ),
        seed=seed,
        abstained=abstained,
    )
