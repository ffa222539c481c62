"""Gradient-free attacks built on numerical gradient estimators.

SPSA (simultaneous perturbation with Rademacher directions), NES
(Gaussian smoothing with antithetic pairs), and coordinate-wise central
finite differences.  Each estimator is exposed as a standalone function so
tests can validate it against analytic oracles independently of the
attack loop that consumes it.
"""

from __future__ import annotations

import numpy as np

from ..threat import distance, project
from .base import AttackConfig, AttackResult, QueryCounter, evaluate_candidate, goal_loss
from .gradient import _grad_step_direction, _hyper, ZERO_GRAD_TOL


def spsa_gradient(f, x, delta, batch, rng):
    """SPSA estimate: mean over the batch of [f(x+du)-f(x-du)]/(2d) * u."""
    g = np.zeros_like(x)
    for _ in range(batch):
        u = np.where(rng.random(x.shape[0]) < 0.5, -1.0, 1.0)
        diff = (f(x + delta * u) - f(x - delta * u)) / (2.0 * delta)
        g += diff * u
    return g / batch


def nes_gradient(f, x, sigma, batch, rng):
    """Gaussian-smoothing estimate with antithetic pairs."""
    g = np.zeros_like(x)
    for _ in range(batch):
        u = rng.standard_normal(x.shape[0])
        diff = (f(x + sigma * u) - f(x - sigma * u)) / (2.0 * sigma)
        g += diff * u
    return g / batch


def fd_gradient(f, x, h, coords=None):
    """Coordinate-wise central differences on the given coordinate subset."""
    coords = range(x.shape[0]) if coords is None else coords
    g = np.zeros_like(x)
    for i in coords:
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def _estimated_ascent(name, estimator, clf, tm, goal, x, y, cfg, rng, queries_per_iter, extra):
    """Shared projected-ascent loop over an estimated gradient."""
    x = np.asarray(x, dtype=np.float64)
    counted = QueryCounter(clf)
    step = cfg.step_for(tm)
    z = x.copy()
    trace = []
    flags = set()
    all_zero = True

    def loss_at(point, call_rng):
        logits = counted.logits(point, rng=call_rng)
        loss, _ = goal_loss(goal, logits, y)
        return loss

    for _ in range(cfg.iterations):
        it_rng = rng.fork() if rng else None
        call_rngs = it_rng.fork_many(2 * queries_per_iter + 1) if it_rng else None
        call_idx = {"i": 0}

        def f(point):
            call_rng = None
            if call_rngs is not None:
                call_rng = call_rngs[min(call_idx["i"], len(call_rngs) - 1)]
                call_idx["i"] += 1
            return loss_at(point, call_rng)

        trace.append(f(z))
        g = estimator(f, z, it_rng)
        if np.max(np.abs(g)) >= ZERO_GRAD_TOL:
            all_zero = False
        z = project(tm, x, z + step * _grad_step_direction(tm, g))

    if all_zero:
        flags.add("zero_gradient")
    success, abstained = evaluate_candidate(counted, goal, z, y, rng=rng.fork() if rng else None)
    return AttackResult(
        final_x=z,
        success=success,
        distortion=distance(tm, x, z),
        queries=counted.count,
        iterations=cfg.iterations,
        loss_trace=trace,
        hyperparams=_hyper(
            name,
            tm,
            cfg,
            rng.seed if rng else 0,
            goal=goal.to_config(),
            iterations=cfg.iterations,
            step_size=step,
            **extra,
        ),
        seed=rng.seed if rng else 0,
        flags=sorted(flags),
        abstained=abstained,
    )


def spsa(clf, tm, goal, x, y, cfg=None, rng=None):
    """SPSA attack: Rademacher-perturbation gradient estimate + projected steps."""
    cfg = cfg or AttackConfig()

    def estimator(f, z, it_rng):
        return spsa_gradient(f, z, cfg.fd_delta, cfg.batch_size, it_rng)

    return _estimated_ascent(
        "spsa",
        estimator,
        clf,
        tm,
        goal,
        x,
        y,
        cfg,
        rng,
        cfg.batch_size,
        {"batch_size": cfg.batch_size, "delta": cfg.fd_delta},
    )


def nes(clf, tm, goal, x, y, cfg=None, rng=None):
    """NES attack: Gaussian-smoothed gradient estimate + projected steps."""
    cfg = cfg or AttackConfig()

    def estimator(f, z, it_rng):
        return nes_gradient(f, z, cfg.nes_sigma, cfg.batch_size, it_rng)

    return _estimated_ascent(
        "nes",
        estimator,
        clf,
        tm,
        goal,
        x,
        y,
        cfg,
        rng,
        cfg.batch_size,
        {"batch_size": cfg.batch_size, "sigma": cfg.nes_sigma},
    )


def zoo_fd(clf, tm, goal, x, y, cfg=None, rng=None):
    """Coordinate finite-difference attack on a random coordinate subset."""
    cfg = cfg or AttackConfig()
    dim = np.asarray(x).shape[0]
    n_coords = cfg.coords_per_iter if cfg.coords_per_iter is not None else dim
    n_coords = min(n_coords, dim)

    def estimator(f, z, it_rng):
        if n_coords == dim or it_rng is None:
            coords = range(dim)
        else:
            coords = it_rng.choice(dim, size=n_coords, replace=False)
        return fd_gradient(f, z, cfg.fd_delta, coords)

    return _estimated_ascent(
        "zoo_fd",
        estimator,
        clf,
        tm,
        goal,
        x,
        y,
        cfg,
        rng,
        n_coords,
        {"coords_per_iter": n_coords, "delta": cfg.fd_delta},
    )
