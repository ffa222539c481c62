"""Minimal dense numerics underpinning the harness.

Everything is 64-bit: the attacks are optimization loops and 32-bit noise
can flip diagnostic verdicts.  The module provides a seeded, forkable RNG,
a numerically stable softmax cross-entropy with analytic gradient, a
manual-backprop MLP (at most two layers in practice), an SGD trainer, and
a finite-difference gradient checker that underwrites every gradient
claim made elsewhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, TrainingDiverged

FD_STEP = 1e-5  # central differences; balances truncation vs round-off at 64-bit


class Rng:
    """Seeded random stream that can fork disjoint child streams.

    Children are spawned deterministically from the parent's seed sequence,
    so parallel workers that each receive a pre-forked child produce
    bit-identical results regardless of scheduling.
    """

    def __init__(self, seed, _seq=None):
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed) if _seq is None else _seq
        self._gen = np.random.default_rng(self._seq)

    def fork(self):
        child = self._seq.spawn(1)[0]
        rng = Rng.__new__(Rng)
        rng.seed = self.seed
        rng._seq = child
        rng._gen = np.random.default_rng(child)
        return rng

    def fork_many(self, n):
        children = self._seq.spawn(n)
        out = []
        for child in children:
            rng = Rng.__new__(Rng)
            rng.seed = self.seed
            rng._seq = child
            rng._gen = np.random.default_rng(child)
            out.append(rng)
        return out

    # thin delegation to the underlying generator
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)


def as_vec(x):
    """Coerce to a finite 1-D float64 vector."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def softmax(logits):
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def softmax_xent(logits, label):
    """Cross-entropy of ``label`` under softmax(logits).

    Returns ``(loss, dlogits)`` where loss = logsumexp(logits) - logits[label]
    (computed with max-subtraction) and dlogits = softmax(logits) - onehot(label).
    """
    logits = np.asarray(logits, dtype=np.float64)
    label = int(label)
    if label < 0 or label >= logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} logits")
    m = np.max(logits)
    lse = m + np.log(np.sum(np.exp(logits - m)))
    loss = lse - logits[label]
    dlogits = softmax(logits)
    dlogits[label] -= 1.0
    return loss, dlogits


@dataclass
class MlpParams:
    """Weights/biases for a dense network; two layers in practice.

    ``weights[i]`` has shape (n_out, n_in); activations are applied between
    layers but not after the last (the last layer emits logits).
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases):
            raise ValueError("weights/biases length mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight rows {w.shape[0]} != bias {b.shape[0]}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim mismatch in shape chain")

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def num_classes(self):
        return self.weights[-1].shape[0]

    def copy(self):
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def init_mlp(dims, rng, activation="relu", scale=None):
    """He-style initialization for the given layer size chain."""
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        s = scale if scale is not None else np.sqrt(2.0 / n_in)
        weights.append(rng.normal(0.0, s, (n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases, activation)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return 1.0 / (1.0 + np.exp(-z))


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return a * (1.0 - a)


def mlp_logits(params, x):
    a = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ a + b
        a = z if i == len(params.weights) - 1 else _act(z, params.activation)
    return a


def mlp_vjp(params, x, dlogits_fn):
    """Forward pass, then backward with dlogits supplied by ``dlogits_fn``.

    ``dlogits_fn(logits) -> dlogits`` lets callers derive the cotangent from
    the forward result (e.g. a goal loss).  Returns
    ``(logits, dlogits, dx, (dweights, dbiases))``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != params.input_dim:
        raise ValueError(f"input dim {x.shape[0]} != model dim {params.input_dim}")
    acts = [x]
    zs = []
    a = x
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ a + b
        zs.append(z)
        a = z if i == n - 1 else _act(z, params.activation)
        acts.append(a)
    logits = acts[-1]
    dlogits = np.asarray(dlogits_fn(logits), dtype=np.float64)

    dweights = [None] * n
    dbiases = [None] * n
    delta = dlogits
    for i in range(n - 1, -1, -1):
        dweights[i] = np.outer(delta, acts[i])
        dbiases[i] = delta.copy()
        delta = params.weights[i].T @ delta
        if i > 0:
            delta = delta * _act_grad(zs[i - 1], acts[i], params.activation)
    return logits, dlogits, delta, (dweights, dbiases)


def mlp_forward_backward(params, x, label):
    """Logits, cross-entropy loss, and exact analytic gradients.

    Returns ``(logits, loss, dx, grads)`` where ``grads`` is an
    MlpParams-shaped pair of lists ``(dweights, dbiases)``.
    """
    loss_box = {}

    def dlogits_fn(logits):
        loss, d = softmax_xent(logits, label)
        loss_box["loss"] = loss
        return d

    logits, _, dx, grads = mlp_vjp(params, x, dlogits_fn)
    return logits, loss_box["loss"], dx, grads


def mlp_mean_loss(params, X, y):
    total = 0.0
    for xi, yi in zip(X, y):
        loss, _ = softmax_xent(mlp_logits(params, xi), yi)
        total += loss
    return total / len(X)


def sgd_train(init, X, y, epochs, lr, rng, batch_size=32):
    """Plain minibatch SGD on softmax cross-entropy.

    Deterministic given the rng seed.  Raises TrainingDiverged naming the
    epoch if a NaN appears.  Never returns parameters with higher training
    loss than the initial ones.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("dataset is empty")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    params = init.copy()
    if epochs == 0:
        return params
    initial_loss = mlp_mean_loss(params, X, y)
    n = len(X)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            acc_w = [np.zeros_like(w) for w in params.weights]
            acc_b = [np.zeros_like(b) for b in params.biases]
            for i in idx:
                _, _, _, (dw, db) = mlp_forward_backward(params, X[i], y[i])
                for j in range(len(acc_w)):
                    acc_w[j] += dw[j]
                    acc_b[j] += db[j]
            m = len(idx)
            for j in range(len(params.weights)):
                params.weights[j] -= lr * acc_w[j] / m
                params.biases[j] -= lr * acc_b[j] / m
        if any(not np.all(np.isfinite(w)) for w in params.weights) or any(
            not np.all(np.isfinite(b)) for b in params.biases
        ):
            raise TrainingDiverged(epoch)
    if mlp_mean_loss(params, X, y) > initial_loss:
        return init.copy()
    return params


def gradient_check(f, x, analytic, h=FD_STEP):
    """Max relative disagreement between central differences and ``analytic``.

    Per coordinate: |fd_i - analytic_i| / max(1, |fd_i|, |analytic_i|).
    Returns the value; callers apply their own threshold.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    worst = 0.0
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        fd = (f(x + e) - f(x - e)) / (2.0 * h)
        denom = max(1.0, abs(fd), abs(analytic[i]))
        worst = max(worst, abs(fd - analytic[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# Parameter serialization: flat binary, magic "AGMP".
# Layout: magic, version u32, activation u32 (0=relu, 1=sigmoid),
# layer count u32, then per layer: rows u32, cols u32, row-major float64 LE
# weights, float64 LE biases.
# ---------------------------------------------------------------------------

_MAGIC = b"AGMP"
_VERSION = 1
_ACT_CODES = {"relu": 0, "sigmoid": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def save_params(params, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, _ACT_CODES[params.activation], len(params.weights)))
        for w, b in zip(params.weights, params.biases):
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}", offset=0)
    try:
        version, act_code, n_layers = struct.unpack_from("<III", data, 4)
    except struct.error:
        raise FormatError("truncated header", offset=4)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if act_code not in _ACT_NAMES:
        raise FormatError(f"unknown activation code {act_code}", offset=8)
    offset = 16
    weights, biases = [], []
    for _ in range(n_layers):
        try:
            rows, cols = struct.unpack_from("<II", data, offset)
        except struct.error:
            raise FormatError("truncated layer header", offset=offset)
        offset += 8
        need = rows * cols * 8
        if len(data) < offset + need:
            raise FormatError("truncated weight block", offset=offset)
        w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += need
        if len(data) < offset + rows * 8:
            raise FormatError("truncated bias block", offset=offset)
        b = np.frombuffer(data, dtype="<f8", count=rows, offset=offset)
        offset += rows * 8
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpParams(weights, biases, _ACT_NAMES[act_code])
