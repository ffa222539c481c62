"""Dataset ingestion and synthesis.

Sources: CSV with a ``label,f0,f1,...`` header, raw MNIST-style IDX image/
label pairs, or synthetic generator strings (``gauss2:n:sigma:margin``,
``circles:n:r1:r2``).  All inputs are validated against the declared box.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int
    num_classes: int
    box_lo: float = 0.0
    box_hi: float = 1.0
    grid_shape: tuple | None = None
    name: str = "dataset"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels have different lengths")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            bad = int(np.argmax((self.labels < 0) | (self.labels >= self.num_classes)))
            raise ValueError(
                f"label {self.labels[bad]} at row {bad} outside class count {self.num_classes}"
            )
        if len(self.inputs) and (
            self.inputs.min() < self.box_lo - 1e-12 or self.inputs.max() > self.box_hi + 1e-12
        ):
            raise ValueError("inputs fall outside the declared box")

    def __len__(self):
        return len(self.inputs)

    def subset(self, idx):
        return Dataset(
            self.inputs[idx],
            self.labels[idx],
            self.num_classes,
            self.box_lo,
            self.box_hi,
            self.grid_shape,
            self.name,
            dict(self.metadata),
        )


def generate_gauss2(n, sigma, margin, rng, box_lo=0.0, box_hi=1.0):
    """Two 2-D Gaussians separated by ``margin`` along the first axis.

    Class 0 sits left of center, class 1 right; samples are clipped to the
    box, which preserves separability.
    """
    half = n // 2
    centers = {0: np.array([0.5 - margin / 2.0, 0.5]), 1: np.array([0.5 + margin / 2.0, 0.5])}
    xs, ys = [], []
    for label, count in ((0, half), (1, n - half)):
        pts = centers[label] + rng.normal(0.0, sigma, (count, 2))
        xs.append(pts)
        ys.append(np.full(count, label))
    X = np.clip(np.vstack(xs), box_lo, box_hi)
    y = np.concatenate(ys)
    order = rng.permutation(n)
    return Dataset(
        X[order], y[order], 2, box_lo, box_hi, None, f"gauss2:{n}:{sigma}:{margin}"
    )


def generate_circles(n, r1, r2, rng, box_lo=0.0, box_hi=1.0):
    """Two concentric rings around the box center."""
    half = n // 2
    xs, ys = [], []
    for label, (count, r) in enumerate(((half, r1), (n - half, r2))):
        theta = rng.uniform(0.0, 2.0 * np.pi, count)
        pts = 0.5 + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        xs.append(pts)
        ys.append(np.full(count, label))
    X = np.clip(np.vstack(xs), box_lo, box_hi)
    y = np.concatenate(ys)
    order = rng.permutation(n)
    return Dataset(X[order], y[order], 2, box_lo, box_hi, None, f"circles:{n}:{r1}:{r2}")


def load_csv(path, num_classes=None, box_lo=0.0, box_hi=1.0):
    with open(path) as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if cols[0] != "label" or any(c != f"f{i}" for i, c in enumerate(cols[1:])):
            raise FormatError(f"bad CSV header {header!r}; expected 'label,f0,f1,...'")
        labels, rows = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    y = np.asarray(labels, dtype=np.int64)
    X = np.asarray(rows, dtype=np.float64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if len(y) else 2
    return Dataset(X, y, num_classes, box_lo, box_hi, None, str(path))


def _read_idx(path, expect_magic, expect_dims):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise FormatError("truncated IDX header", offset=0)
    magic = struct.unpack_from(">I", data, 0)[0]
    if magic != expect_magic:
        raise FormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{expect_magic:08x}", offset=0)
    dims = []
    offset = 4
    for _ in range(expect_dims):
        if len(data) < offset + 4:
            raise FormatError("truncated IDX dimension header", offset=offset)
        dims.append(struct.unpack_from(">I", data, offset)[0])
        offset += 4
    count = int(np.prod(dims))
    if len(data) < offset + count:
        raise FormatError("truncated IDX payload", offset=offset)
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=offset).reshape(dims)


def load_idx_pair(images_path, labels_path, limit=None):
    """Raw MNIST layout: big-endian dims, bytes scaled into [0, 1]."""
    imgs = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if imgs.shape[0] != labels.shape[0]:
        raise FormatError(
            f"image count {imgs.shape[0]} != label count {labels.shape[0]}"
        )
    if limit is not None:
        imgs = imgs[:limit]
        labels = labels[:limit]
    n, h, w = imgs.shape
    X = imgs.reshape(n, h * w).astype(np.float64) / 255.0
    return Dataset(
        X,
        labels.astype(np.int64),
        10,
        0.0,
        1.0,
        (h, w),
        "mnist-idx",
    )


def load_dataset(spec, rng=None, box_lo=0.0, box_hi=1.0, num_classes=None):
    """Resolve a dataset spec: generator string, CSV path, or IDX pair.

    Generator specs require an rng; IDX pairs are given as
    ``idx:IMAGES_PATH:LABELS_PATH``.
    """
    if isinstance(spec, Dataset):
        return spec
    if spec.startswith("gauss2:"):
        _, n, sigma, margin = spec.split(":")
        if rng is None:
            raise ValueError("generator datasets require an rng")
        return generate_gauss2(int(n), float(sigma), float(margin), rng, box_lo, box_hi)
    if spec.startswith("circles:"):
        _, n, r1, r2 = spec.split(":")
        if rng is None:
            raise ValueError("generator datasets require an rng")
        return generate_circles(int(n), float(r1), float(r2), rng, box_lo, box_hi)
    if spec.startswith("idx:"):
        _, images, labels = spec.split(":", 2)
        return load_idx_pair(images, labels)
    return load_csv(spec, num_classes=num_classes, box_lo=box_lo, box_hi=box_hi)
