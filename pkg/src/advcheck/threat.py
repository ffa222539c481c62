"""Threat-model engine: distances, norm-ball projections, ball sampling.

A ThreatModel fixes the norm order p, the budget epsilon, and box bounds.
All constraint handling in the harness goes through these three operations
so attacks never reimplement their own projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_NORM_NAMES = {"inf": np.inf, "0": 0, "1": 1, "2": 2}


def parse_norm(p):
    if isinstance(p, str):
        if p not in _NORM_NAMES:
            raise ValueError(f"unknown norm {p!r}; expected one of {sorted(_NORM_NAMES)}")
        return _NORM_NAMES[p]
    if p in (0, 1, 2) or p == np.inf:
        return p
    raise ValueError(f"unsupported norm order {p!r}")


@dataclass
class ThreatModel:
    p: float
    epsilon: float
    box_lo: float = 0.0
    box_hi: float = 1.0

    def __post_init__(self):
        self.p = parse_norm(self.p)
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if np.any(np.asarray(self.box_lo) > np.asarray(self.box_hi)):
            raise ValueError("box_lo must not exceed box_hi")

    def with_epsilon(self, epsilon):
        return ThreatModel(self.p, epsilon, self.box_lo, self.box_hi)

    def clip_box(self, x):
        return np.clip(x, self.box_lo, self.box_hi)

    @property
    def norm_name(self):
        return "inf" if self.p == np.inf else str(int(self.p))

    def to_config(self):
        return {"p": self.norm_name, "epsilon": self.epsilon, "box": [self.box_lo, self.box_hi]}

    @classmethod
    def from_config(cls, cfg):
        box = cfg.get("box", [0.0, 1.0])
        return cls(parse_norm(cfg["p"]), float(cfg["epsilon"]), float(box[0]), float(box[1]))


def distance(tm, x, x2):
    """lp distance between x and x2 under the threat model's norm."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    d = x - x2
    if tm.p == np.inf:
        return float(np.max(np.abs(d))) if d.size else 0.0
    if tm.p == 0:
        return float(np.count_nonzero(d))
    if tm.p == 1:
        return float(np.sum(np.abs(d)))
    return float(np.sqrt(np.sum(d * d)))


def _project_simplex(v, radius):
    """Euclidean projection of v (componentwise >= 0) onto the simplex sum <= radius."""
    if v.sum() <= radius:
        return v
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, v.size + 1) > (css - radius))[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project(tm, origin, x):
    """Nearest point (Euclidean) to x inside the eps-ball around origin, within the box.

    l-inf: coordinate clamp; l2: radial scaling alternated with box clipping
    to a 1e-10 fixpoint; l1: simplex projection of |delta|; l0: keep the
    floor(eps) largest-|delta| coordinates.
    """
    origin = np.asarray(origin, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if origin.shape != x.shape:
        raise ValueError(f"dimension mismatch: {origin.shape} vs {x.shape}")
    eps = tm.epsilon

    if tm.p == np.inf:
        z = np.clip(x, origin - eps, origin + eps)
        return tm.clip_box(z)

    if tm.p == 2:
        in_box = np.all(x >= tm.box_lo) and np.all(x <= tm.box_hi)
        if distance(tm, origin, x) <= eps and in_box:
            return x.copy()
        z = x
        for _ in range(100):
            delta = z - origin
            norm = np.sqrt(np.sum(delta * delta))
            if norm > eps:
                delta = delta * (eps / norm) if norm > 0 else delta
            z_new = tm.clip_box(origin + delta)
            if np.max(np.abs(z_new - z)) < 1e-10 and distance(tm, origin, z_new) <= eps + 1e-12:
                return z_new
            z = z_new
        # final radial pass; box clip never increases distance to origin
        delta = z - origin
        norm = np.sqrt(np.sum(delta * delta))
        if norm > eps and norm > 0:
            delta *= eps / norm
        return tm.clip_box(origin + delta)

    if tm.p == 1:
        delta = x - origin
        mag = _project_simplex(np.abs(delta), eps)
        return tm.clip_box(origin + np.sign(delta) * mag)

    # l0: integer coordinate budget, rounding eps down
    k = int(np.floor(eps))
    delta = x - origin
    z = origin.copy()
    if k > 0:
        keep = np.argsort(np.abs(delta))[::-1][:k]
        z[keep] = x[keep]
    return tm.clip_box(z)


def sample_in_ball(tm, origin, rng):
    """Uniform-ish sample within the eps-ball around origin, box-clipped.

    l-inf is coordinate-wise uniform; l2 is direction-uniform with radius
    eps * u^(1/dim); l1 uses a Dirichlet magnitude profile with the same
    radius law; l0 picks floor(eps) coordinates and resamples them in-box.
    """
    origin = np.asarray(origin, dtype=np.float64)
    if tm.epsilon == 0:
        return origin.copy()
    d = origin.shape[0]
    eps = tm.epsilon

    if tm.p == np.inf:
        z = origin + rng.uniform(-eps, eps, d)
        return tm.clip_box(z)

    if tm.p == 2:
        direction = rng.standard_normal(d)
        n = np.sqrt(np.sum(direction * direction))
        if n == 0:
            return origin.copy()
        r = eps * rng.random() ** (1.0 / d)
        return tm.clip_box(origin + direction * (r / n))

    if tm.p == 1:
        mags = -np.log(rng.random(d))
        mags /= mags.sum()
        signs = np.where(rng.random(d) < 0.5, -1.0, 1.0)
        r = eps * rng.random() ** (1.0 / d)
        return tm.clip_box(origin + signs * mags * r)

    k = int(np.floor(eps))
    z = origin.copy()
    if k > 0:
        idx = rng.choice(d, size=min(k, d), replace=False)
        z[idx] = rng.uniform(tm.box_lo, tm.box_hi, len(idx))
    return z
