"""Hard-label (decision-based) attacks: boundary walk and random search.

Both attacks only consume ``predict``; they work against models that
expose no confidence values at all.
"""

from __future__ import annotations

import numpy as np

from ..errors import InitFailure
from ..threat import ThreatModel, distance, sample_in_ball
from .base import AttackConfig, AttackResult, QueryCounter
from .gradient import _hyper


def _l2(a, b):
    d = a - b
    return float(np.sqrt(np.sum(d * d)))


def _bisect_toward(is_adv, x, adv, steps=12):
    """Binary search along the segment [x, adv] for the closest adversarial point."""
    lo, hi = 0.0, 1.0  # fraction of the way from x to adv
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        cand = x + mid * (adv - x)
        if is_adv(cand):
            hi = mid
        else:
            lo = mid
    return x + hi * (adv - x)


def boundary_attack(clf, tm, goal, x, y, cfg=None, rng=None, init_pool=None):
    """Decision-boundary descent via rejection sampling.

    Starts from any adversarial point (random box samples, then the
    optional ``init_pool`` of other-class inputs), walks along the boundary
    with orthogonal perturbations plus contraction toward x, and adapts the
    step sizes toward roughly 25% acceptance.  The attack is unbounded: the
    deliverable is the smallest distortion found, and ``success`` reports
    whether that distortion fits the threat budget.
    """
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    counted = QueryCounter(clf)
    pred_rng = rng.fork() if rng else None
    walk_rng = rng.fork() if rng else None
    flags = []
    if clf.randomness is not None:
        # acceptance decisions are inconsistent when the target re-rolls noise
        flags.append("randomized_target")

    def is_adv(z):
        pred = counted.predict(z, rng=pred_rng.fork() if pred_rng else None)
        return goal.succeeded(pred, y)

    hyper = _hyper(
        "boundary",
        tm,
        cfg,
        rng.seed if rng else 0,
        goal=goal.to_config(),
        iterations=cfg.iterations,
        init_trials=cfg.init_trials,
    )

    if is_adv(x):
        return AttackResult(
            final_x=x.copy(),
            success=True,
            distortion=0.0,
            queries=counted.count,
            iterations=0,
            hyperparams=hyper,
            seed=rng.seed if rng else 0,
            flags=flags,
        )

    # initialization: uniform box samples, then other-class pool examples
    start = None
    dim = x.shape[0]
    for _ in range(cfg.init_trials):
        cand = walk_rng.uniform(tm.box_lo, tm.box_hi, dim) if walk_rng else None
        if cand is not None and is_adv(cand):
            start = cand
            break
    if start is None and init_pool is not None:
        for cand in init_pool:
            cand = np.asarray(cand, dtype=np.float64)
            if is_adv(cand):
                start = cand
                break
    if start is None:
        raise InitFailure(f"no adversarial starting point after {cfg.init_trials} trials")

    best = _bisect_toward(is_adv, x, start)
    d_best = _l2(x, best)

    # two independently adapted steps: orthogonal walk along the boundary
    # (target ~50% acceptance) and contraction toward x (target ~25%)
    orth_step = 0.1  # relative to current distance
    toward_step = 0.05
    orth_ok = orth_n = 0
    toward_ok = toward_n = 0
    for t in range(cfg.iterations):
        if d_best == 0:
            break
        u = best - x
        eta = walk_rng.standard_normal(dim)
        eta -= (eta @ u) / (u @ u) * u
        n = np.sqrt(np.sum(eta * eta))
        if n > 0:
            eta *= orth_step * d_best / n
        cand = best + eta
        # re-project to the sphere of radius d_best around x
        cd = _l2(x, cand)
        if cd > 0:
            cand = x + (cand - x) * (d_best / cd)
        cand = tm.clip_box(cand)
        orth_n += 1
        if is_adv(cand) and _l2(x, cand) <= d_best + 1e-12:
            best = cand
            d_best = _l2(x, best)
            orth_ok += 1
            # contraction trial from the accepted point
            toward_n += 1
            contracted = tm.clip_box(x + (1.0 - toward_step) * (best - x))
            if is_adv(contracted):
                best = contracted
                d_best = _l2(x, best)
                toward_ok += 1
        if orth_n >= 30:
            rate = orth_ok / orth_n
            if rate < 0.3:
                orth_step *= 0.7
            elif rate > 0.7:
                orth_step *= 1.3
            orth_step = float(np.clip(orth_step, 1e-4, 1.0))
            orth_ok = orth_n = 0
        if toward_n >= 10:
            rate = toward_ok / toward_n
            if rate < 0.2:
                toward_step *= 0.7
            elif rate > 0.5:
                toward_step *= 1.3
            toward_step = float(np.clip(toward_step, 1e-4, 0.5))
            toward_ok = toward_n = 0
        if (t + 1) % 500 == 0:
            # occasional straight-line refinement toward x
            refined = _bisect_toward(is_adv, x, best)
            rd = _l2(x, refined)
            if rd < d_best:
                best, d_best = refined, rd

    refined = _bisect_toward(is_adv, x, best)
    if _l2(x, refined) < d_best:
        best = refined

    dist = distance(tm, x, best)
    return AttackResult(
        final_x=best,
        success=dist <= tm.epsilon,
        distortion=dist,
        queries=counted.count,
        iterations=cfg.iterations,
        hyperparams=hyper,
        seed=rng.seed if rng else 0,
        flags=flags,
    )


def random_search(clf, tm, goal, x, y, cfg=None, rng=None):
    """Brute-force sampling in the ball; shrinks the radius on each success.

    Any success strictly tightens the search to smaller distortions, so the
    returned candidate is the best the sample budget found.
    """
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    counted = QueryCounter(clf)
    pred_rng = rng.fork() if rng else None
    draw_rng = rng.fork() if rng else None

    def is_adv(z):
        pred = counted.predict(z, rng=pred_rng.fork() if pred_rng else None)
        return goal.succeeded(pred, y)

    best = None
    best_dist = tm.epsilon
    if is_adv(x):
        best, best_dist = x.copy(), 0.0
    searched = 0
    if best_dist > 0:
        radius = tm.epsilon
        search_tm = tm
        for _ in range(cfg.samples):
            searched += 1
            cand = sample_in_ball(search_tm, x, draw_rng) if draw_rng else x
            d = distance(tm, x, cand)
            if d < best_dist and is_adv(cand):
                best, best_dist = cand, d
                radius = d
                search_tm = ThreatModel(tm.p, radius, tm.box_lo, tm.box_hi)
                if radius == 0:
                    break

    success = best is not None
    return AttackResult(
        final_x=best if success else x.copy(),
        success=success,
        distortion=best_dist if success else float("inf"),
        queries=counted.count,
        iterations=searched,
        hyperparams=_hyper(
            "random_search",
            tm,
            cfg,
            rng.seed if rng else 0,
            goal=goal.to_config(),
            samples=cfg.samples,
        ),
        seed=rng.seed if rng else 0,
    )
