"""Spatial brute-force probe and the Gaussian-noise accuracy curve.

Rotation/translation robustness is checked by exhaustive grid search over
transform parameters (no gradients involved, so gradient masking cannot
hide anything from it).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import AttackInapplicable
from .base import AttackConfig, AttackResult, QueryCounter, evaluate_candidate
from .gradient import _hyper


def transform_grid_image(x, grid_shape, angle_deg, shift_rc, box_lo, box_hi):
    """Rotate about the center and translate, with bilinear resampling."""
    h, w = grid_shape
    img = np.asarray(x, dtype=np.float64).reshape(h, w)
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = np.stack([rows.ravel(), cols.ravel()]).astype(np.float64)
    # inverse map: output pixel -> source pixel
    rel = coords - center[:, None] - np.asarray(shift_rc, dtype=np.float64)[:, None]
    src = np.empty_like(rel)
    src[0] = c * rel[0] - s * rel[1] + center[0]
    src[1] = s * rel[0] + c * rel[1] + center[1]
    out = ndimage.map_coordinates(img, src, order=1, mode="constant", cval=box_lo)
    return np.clip(out, box_lo, box_hi)


def spatial_bruteforce(clf, tm, goal, x, y, cfg=None, rng=None, grid_shape=None):
    """Exhaustive rotation/translation grid; success if any transform wins.

    Distortion is reported as the winning transform's parameters (in
    ``hyperparams``), not as an lp distance.
    """
    cfg = cfg or AttackConfig()
    if grid_shape is None:
        raise AttackInapplicable("spatial attack needs an H x W grid shape")
    x = np.asarray(x, dtype=np.float64)
    counted = QueryCounter(clf)
    eval_rng = rng.fork() if rng else None

    max_rot = cfg.spatial_max_rotation
    rot_step = cfg.spatial_rotation_step
    max_shift = cfg.spatial_max_shift
    angles = np.arange(-max_rot, max_rot + rot_step / 2, rot_step)
    shifts = range(-max_shift, max_shift + 1)

    found = None
    tried = 0
    for angle in angles:
        for dr in shifts:
            for dc in shifts:
                cand = transform_grid_image(x, grid_shape, angle, (dr, dc), tm.box_lo, tm.box_hi)
                tried += 1
                ok, _ = evaluate_candidate(
                    counted, goal, cand, y, rng=eval_rng.fork() if eval_rng else None
                )
                if ok and found is None:
                    found = (cand, float(angle), (dr, dc))
    hyper = _hyper(
        "spatial",
        tm,
        cfg,
        rng.seed if rng else 0,
        goal=goal.to_config(),
        rotation_range=[-max_rot, max_rot],
        rotation_step=rot_step,
        shift_range=max_shift,
        grid=list(grid_shape),
    )
    if found is not None:
        cand, angle, shift = found
        hyper["winning_transform"] = {"rotation_deg": angle, "shift": list(shift)}
        final, success = cand, True
    else:
        final, success = x.copy(), False
    return AttackResult(
        final_x=final,
        success=success,
        distortion=float("nan"),  # transform-parameterized, not an lp distance
        queries=counted.count,
        iterations=tried,
        hyperparams=hyper,
        seed=rng.seed if rng else 0,
    )


def gaussian_noise_curve(clf, X, y, sigmas, rng, draws=10):
    """Accuracy under additive Gaussian input noise, per sigma.

    Returns a list of dicts with mean and std of accuracy over ``draws``
    noise draws per example.  sigma = 0 reproduces clean accuracy exactly.
    """
    sigmas = list(sigmas)
    if any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigmas must be sorted ascending")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    out = []
    for sigma in sigmas:
        accs = []
        for _ in range(1 if sigma == 0 else draws):
            correct = 0
            for xi, yi in zip(X, y):
                noisy = xi if sigma == 0 else xi + rng.normal(0.0, sigma, xi.shape[0])
                if clf.predict(noisy, rng=rng.fork() if clf.randomness else None) == yi:
                    correct += 1
            accs.append(correct / len(X))
        out.append(
            {
                "sigma": float(sigma),
                "accuracy_mean": float(np.mean(accs)),
                "accuracy_std": float(np.std(accs)),
                "draws": len(accs),
            }
        )
    return out
