"""Classifier abstraction and the defense-pathology model zoo.

Every attack targets the same small surface: ``logits(x, rng)``,
``predict(x, rng)``, an optional VJP-style gradient, and an optional
abstain score.  Wrappers implement known gradient-masking pathologies
(quantization, input noise, logit saturation, confidence thresholding)
so the diagnostics have ground truth to validate against.

The ``masked`` flag is metadata for tests only; attacks never read it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GradientUnavailable
from .numerics import MlpParams, mlp_vjp, softmax

ABSTAIN = -1


@dataclass
class RandomnessSpec:
    """Describes per-call randomness: additive Gaussian noise on the input."""

    kind: str
    sigma: float
    fixable: bool = True


class Classifier:
    """Base contract: deterministic unless ``randomness`` is set."""

    num_classes = None
    input_dim = None
    masked = False
    randomness = None
    cost_per_query = 1  # logical model queries consumed per logits call

    @property
    def has_gradients(self):
        return True

    def logits(self, x, rng=None):
        raise NotImplementedError

    def forward_backward(self, x, dlogits_fn, rng=None):
        """Forward pass plus VJP: returns (logits, dloss/dx).

        ``dlogits_fn(logits) -> dlogits`` supplies the cotangent; randomized
        models use a single noise draw for both directions.
        """
        raise GradientUnavailable(f"{type(self).__name__} exposes no input gradient")

    def predict(self, x, rng=None):
        return int(np.argmax(self.logits(x, rng=rng)))

    def abstain_score(self, x, rng=None):
        return None


class LinearModel(Classifier):
    """Multi-class linear classifier: logits = W x + b."""

    def __init__(self, W, b):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"shape mismatch: W {self.W.shape}, b {self.b.shape}")
        self.num_classes = self.W.shape[0]
        self.input_dim = self.W.shape[1]

    def logits(self, x, rng=None):
        return self.W @ np.asarray(x, dtype=np.float64) + self.b

    def forward_backward(self, x, dlogits_fn, rng=None):
        z = self.logits(x)
        dlogits = np.asarray(dlogits_fn(z), dtype=np.float64)
        return z, self.W.T @ dlogits


def binary_linear(w, b=0.0):
    """Two-class linear model: class 0 iff w.x + b > 0 (logits [s, 0])."""
    w = np.asarray(w, dtype=np.float64)
    W = np.vstack([w, np.zeros_like(w)])
    return LinearModel(W, np.array([float(b), 0.0]))


class MlpClassifier(Classifier):
    """Dense MLP victim with exact analytic input gradients."""

    def __init__(self, params: MlpParams):
        self.params = params
        self.num_classes = params.num_classes
        self.input_dim = params.input_dim

    def logits(self, x, rng=None):
        from .numerics import mlp_logits

        return mlp_logits(self.params, np.asarray(x, dtype=np.float64))

    def forward_backward(self, x, dlogits_fn, rng=None):
        logits, _, dx, _ = mlp_vjp(self.params, x, dlogits_fn)
        return logits, dx


def make_reference(kind, params):
    """Reference victims: ``linear`` takes (w, b); ``mlp`` takes MlpParams."""
    if kind == "linear":
        w, b = params
        return binary_linear(w, b)
    if kind == "mlp":
        return MlpClassifier(params)
    raise ValueError(f"unknown reference kind {kind!r}")


# ---------------------------------------------------------------------------
# Defense wrappers
# ---------------------------------------------------------------------------


class DefenseWrapper(Classifier):
    """Common plumbing: unwrapping always recovers the inner model exactly."""

    kind = None

    def __init__(self, inner):
        self.inner = inner
        self.num_classes = inner.num_classes
        self.input_dim = inner.input_dim

    @property
    def has_gradients(self):
        return self.inner.has_gradients

    @property
    def randomness(self):
        return self.inner.randomness

    def abstain_score(self, x, rng=None):
        return self.inner.abstain_score(x, rng=rng)


def unwrap(clf):
    """Strip one wrapper layer."""
    if isinstance(clf, DefenseWrapper):
        return clf.inner
    return clf


def unwrap_fully(clf):
    while isinstance(clf, DefenseWrapper):
        clf = clf.inner
    return clf


class QuantizeWrapper(DefenseWrapper):
    """Snap inputs to a uniform grid before the inner model.

    The forward function is piecewise constant, so the honest almost-
    everywhere input gradient is identically zero; gradient attacks that
    consume it stall, which is exactly the pathology this wrapper models.
    The grid boundary (``preprocess``) is exposed for BPDA.
    """

    kind = "quantize"
    masked = True

    def __init__(self, inner, levels, box_lo=0.0, box_hi=1.0):
        if levels < 2:
            raise ValueError("levels must be >= 2")
        super().__init__(inner)
        self.levels = int(levels)
        self.box_lo = float(box_lo)
        self.box_hi = float(box_hi)

    def preprocess(self, x):
        x = np.asarray(x, dtype=np.float64)
        span = self.box_hi - self.box_lo
        steps = np.round((x - self.box_lo) / span * (self.levels - 1))
        return self.box_lo + steps * span / (self.levels - 1)

    def logits(self, x, rng=None):
        return self.inner.logits(self.preprocess(x), rng=rng)

    def forward_backward(self, x, dlogits_fn, rng=None):
        z = self.logits(x, rng=rng)
        dlogits_fn(z)  # evaluated for side effects (loss recording) only
        return z, np.zeros_like(np.asarray(x, dtype=np.float64))


class NoiseWrapper(DefenseWrapper):
    """Add Gaussian input noise per logits call.

    The noise draw comes from the call's rng handle; fixing the randomness
    (``with_fixed_randomness``) returns a deterministic copy that reuses one
    sampled noise vector for every call.
    """

    kind = "noise"

    def __init__(self, inner, sigma, fixed_value=None):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        super().__init__(inner)
        self.sigma = float(sigma)
        self.fixed_value = fixed_value

    @property
    def randomness(self):
        if self.sigma == 0 or self.fixed_value is not None:
            return None
        return RandomnessSpec(kind="gaussian_input", sigma=self.sigma)

    def with_fixed_randomness(self, rng):
        noise = rng.normal(0.0, self.sigma, self.input_dim) if self.sigma > 0 else np.zeros(self.input_dim)
        return NoiseWrapper(self.inner, self.sigma, fixed_value=noise)

    def _draw(self, rng):
        if self.fixed_value is not None:
            return self.fixed_value
        if self.sigma == 0:
            return 0.0
        if rng is None:
            raise ValueError("randomized model requires an rng handle")
        return rng.normal(0.0, self.sigma, self.input_dim)

    def logits(self, x, rng=None):
        return self.inner.logits(np.asarray(x, dtype=np.float64) + self._draw(rng), rng=rng)

    def forward_backward(self, x, dlogits_fn, rng=None):
        noise = self._draw(rng)
        # one draw shared by forward and backward; d(x + n)/dx = I
        return self.inner.forward_backward(np.asarray(x, dtype=np.float64) + noise, dlogits_fn, rng=rng)


class SaturateWrapper(DefenseWrapper):
    """Squash logits through tanh(k * z).

    Elementwise monotone, so the argmax (and every prediction) is unchanged,
    but the analytic gradient collapses as k grows -- the classic saturated-
    activation masking pathology.
    """

    kind = "saturate"

    def __init__(self, inner, k):
        if k <= 0:
            raise ValueError("k must be positive")
        super().__init__(inner)
        self.k = float(k)
        self.masked = self.k >= 100

    def logits(self, x, rng=None):
        return np.tanh(self.k * self.inner.logits(x, rng=rng))

    def forward_backward(self, x, dlogits_fn, rng=None):
        out = {}

        def chained(z):
            s = np.tanh(self.k * z)
            out["logits"] = s
            d_out = np.asarray(dlogits_fn(s), dtype=np.float64)
            return d_out * self.k * (1.0 - s * s)

        _, dx = self.inner.forward_backward(x, chained, rng=rng)
        return out["logits"], dx


class DetectorWrapper(DefenseWrapper):
    """Abstain when softmax confidence falls below a threshold tau.

    abstain_score = tau - max softmax probability; positive means abstain.
    """

    kind = "detector"

    def __init__(self, inner, tau):
        super().__init__(inner)
        self.tau = float(tau)

    def abstain_score(self, x, rng=None):
        p = softmax(self.inner.logits(x, rng=rng))
        return self.tau - float(np.max(p))

    def logits(self, x, rng=None):
        return self.inner.logits(x, rng=rng)

    def forward_backward(self, x, dlogits_fn, rng=None):
        return self.inner.forward_backward(x, dlogits_fn, rng=rng)

    def predict(self, x, rng=None):
        z = self.inner.logits(x, rng=rng)
        if self.tau - float(np.max(softmax(z))) > 0:
            return ABSTAIN
        return int(np.argmax(z))


def is_masked(clf):
    """True if any layer of the wrapper chain is flagged as gradient-masking."""
    while clf is not None:
        if getattr(clf, "masked", False):
            return True
        clf = clf.inner if isinstance(clf, DefenseWrapper) else None
    return False


def fix_randomness(clf, rng):
    """Return a copy of the wrapper chain with any noise layer pinned to one draw.

    Returns None if the chain has no fixable randomness.
    """
    if isinstance(clf, NoiseWrapper) and clf.randomness is not None:
        return clf.with_fixed_randomness(rng)
    if isinstance(clf, DefenseWrapper):
        fixed_inner = fix_randomness(clf.inner, rng)
        if fixed_inner is None:
            return None
        copy = object.__new__(type(clf))
        copy.__dict__.update(clf.__dict__)
        copy.inner = fixed_inner
        return copy
    return None


_WRAPPERS = {
    "quantize": lambda inner, arg, box: QuantizeWrapper(inner, int(arg), box[0], box[1]),
    "noise": lambda inner, arg, box: NoiseWrapper(inner, float(arg)),
    "saturate": lambda inner, arg, box: SaturateWrapper(inner, float(arg)),
    "detector": lambda inner, arg, box: DetectorWrapper(inner, float(arg)),
}


def build_model(model_id, base_params, box=(0.0, 1.0)):
    """Resolve a zoo id like ``mlp+saturate:1000`` into a classifier.

    ``base_params`` maps base kinds to their parameters, e.g.
    ``{"mlp": MlpParams, "linear": (w, b)}``.  Wrapper chains apply
    left-to-right.
    """
    parts = model_id.split("+")
    base = parts[0]
    if base not in base_params:
        raise ValueError(f"no parameters registered for base model {base!r}")
    clf = make_reference(base, base_params[base])
    for spec in parts[1:]:
        if ":" in spec:
            name, arg = spec.split(":", 1)
        else:
            name, arg = spec, None
        if name not in _WRAPPERS:
            raise ValueError(f"unknown wrapper {name!r} in model id {model_id!r}")
        clf = _WRAPPERS[name](clf, arg, box)
    return clf
