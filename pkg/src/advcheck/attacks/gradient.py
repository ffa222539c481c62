"""White-box gradient attacks: FGSM, PGD, and per-example minimum distortion."""

from __future__ import annotations

import numpy as np

from ..errors import AttackInapplicable
from ..threat import distance, project, sample_in_ball
from .base import AttackConfig, AttackResult, QueryCounter, evaluate_candidate, goal_loss

ZERO_GRAD_TOL = 1e-12


def _hyper(name, tm, cfg, seed, **extra):
    d = {
        "attack": name,
        "threat": tm.to_config(),
        "seed": seed,
        **extra,
    }
    return d


def _grad_step_direction(tm, g):
    if tm.p == np.inf:
        return np.sign(g)
    n = np.sqrt(np.sum(g * g))
    if n == 0:
        return np.zeros_like(g)
    return g / n


def fgsm(clf, tm, goal, x, y, cfg=None, rng=None):
    """Single-step sign attack; baseline only, l-inf threat models.

    Flags ``zero_gradient`` (and stays at x) when the model's gradient
    vanishes at the origin.
    """
    cfg = cfg or AttackConfig()
    if tm.p != np.inf:
        raise AttackInapplicable("fgsm is defined for the l-inf threat model")
    if not clf.has_gradients:
        raise AttackInapplicable("fgsm requires a model with gradients")
    x = np.asarray(x, dtype=np.float64)
    counted = QueryCounter(clf)
    grad_rng = rng.fork() if rng is not None else None
    eval_rng = rng.fork() if rng is not None else None

    losses = {}

    def dlogits_fn(logits):
        loss, d = goal_loss(goal, logits, y)
        losses["loss"] = loss
        return d

    _, g = counted.forward_backward(x, dlogits_fn, rng=grad_rng)
    flags = []
    if np.max(np.abs(g)) < ZERO_GRAD_TOL:
        final = x.copy()
        flags.append("zero_gradient")
    else:
        final = project(tm, x, x + tm.epsilon * np.sign(g))
    success, abstained = evaluate_candidate(counted, goal, final, y, rng=eval_rng)
    return AttackResult(
        final_x=final,
        success=success,
        distortion=distance(tm, x, final),
        queries=counted.count,
        iterations=1,
        loss_trace=[losses["loss"]],
        hyperparams=_hyper("fgsm", tm, cfg, rng.seed if rng else 0, goal=goal.to_config()),
        seed=rng.seed if rng else 0,
        flags=flags,
        abstained=abstained,
    )


def _pgd_single(counted, tm, goal, x, y, x0, step, iterations, rng):
    """One PGD restart; returns (final_x, final_loss, trace, all_zero_grad)."""
    z = project(tm, x, np.asarray(x0, dtype=np.float64))
    trace = []
    all_zero = True
    losses = {}

    def dlogits_fn(logits):
        loss, d = goal_loss(goal, logits, y)
        losses["loss"] = loss
        return d

    for _ in range(iterations):
        _, g = counted.forward_backward(z, dlogits_fn, rng=rng.fork() if rng else None)
        trace.append(losses["loss"])
        if np.max(np.abs(g)) >= ZERO_GRAD_TOL:
            all_zero = False
        z = project(tm, x, z + step * _grad_step_direction(tm, g))
    final_logits = counted.logits(z, rng=rng.fork() if rng else None)
    final_loss, _ = goal_loss(goal, final_logits, y)
    return z, final_loss, trace, all_zero


def pgd(clf, tm, goal, x, y, cfg=None, rng=None):
    """Projected gradient ascent on the goal loss with random restarts.

    The first restart starts at x itself when ``cfg.first_start_at_origin``;
    further restarts start at uniform samples inside the ball.  The best
    restart wins: successful restarts are preferred, ties broken by higher
    final goal loss, then by lowest restart index.
    """
    cfg = cfg or AttackConfig()
    if not clf.has_gradients:
        raise AttackInapplicable("pgd requires a model with gradients")
    x = np.asarray(x, dtype=np.float64)
    counted = QueryCounter(clf)
    step = cfg.step_for(tm)

    best = None  # (success, final_loss, -index, final_x, trace, abstained)
    flags = set()
    restart_rngs = rng.fork_many(cfg.restarts) if rng is not None else [None] * cfg.restarts
    for r in range(cfg.restarts):
        r_rng = restart_rngs[r]
        if r == 0 and cfg.first_start_at_origin:
            x0 = x.copy()
        else:
            sample_rng = r_rng.fork() if r_rng else None
            x0 = sample_in_ball(tm, x, sample_rng) if sample_rng else x.copy()
        final, final_loss, trace, all_zero = _pgd_single(
            counted, tm, goal, x, y, x0, step, cfg.iterations, r_rng
        )
        if all_zero:
            flags.add("zero_gradient")
        success, abstained = evaluate_candidate(
            counted, goal, final, y, rng=r_rng.fork() if r_rng else None
        )
        key = (success, final_loss, -r)
        if best is None or key > best[0]:
            best = (key, final, trace, success, abstained)

    _, final, trace, success, abstained = best
    return AttackResult(
        final_x=final,
        success=success,
        distortion=distance(tm, x, final),
        queries=counted.count,
        iterations=cfg.iterations,
        loss_trace=trace,
        hyperparams=_hyper(
            "pgd",
            tm,
            cfg,
            rng.seed if rng else 0,
            goal=goal.to_config(),
            iterations=cfg.iterations,
            step_size=step,
            restarts=cfg.restarts,
            first_start_at_origin=cfg.first_start_at_origin,
        ),
        seed=rng.seed if rng else 0,
        flags=sorted(flags),
        abstained=abstained,
    )


def min_distortion(clf, tm, goal, x, y, cfg=None, rng=None, attack=pgd):
    """Smallest budget at which the inner attack succeeds, by bisection.

    ``tm.epsilon`` (or ``cfg.eps_max``) is the search ceiling.  Returns a
    result whose ``distortion`` is the bisected epsilon-star and whose
    ``final_x`` is the certificate adversarial input; ``success`` is False
    when even the ceiling budget fails.
    """
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    eps_max = cfg.eps_max if cfg.eps_max is not None else tm.epsilon
    if not np.isfinite(eps_max) or eps_max <= 0:
        raise ValueError("min_distortion needs a finite positive search ceiling")

    queries = 0
    probes = 0
    seed = rng.seed if rng else 0

    # already adversarial: epsilon-star is zero
    check_rng = rng.fork() if rng else None
    from .base import QueryCounter as _QC

    probe_counter = _QC(clf)
    success0, abstained0 = evaluate_candidate(probe_counter, goal, x, y, rng=check_rng)
    queries += probe_counter.count
    hyper = _hyper(
        "min_distortion",
        tm,
        cfg,
        seed,
        goal=goal.to_config(),
        eps_max=eps_max,
        eps_tol=cfg.eps_tol,
        inner=getattr(attack, "__name__", str(attack)),
    )
    if success0:
        return AttackResult(
            final_x=x.copy(),
            success=True,
            distortion=0.0,
            queries=queries,
            iterations=0,
            hyperparams=hyper,
            seed=seed,
            abstained=abstained0,
        )

    def run(eps):
        nonlocal queries, probes
        probes += 1
        res = attack(clf, tm.with_epsilon(eps), goal, x, y, cfg, rng.fork() if rng else None)
        queries += res.queries
        return res

    top = run(eps_max)
    if not top.success:
        return AttackResult(
            final_x=top.final_x,
            success=False,
            distortion=float("inf"),
            queries=queries,
            iterations=probes,
            hyperparams=hyper,
            seed=seed,
            flags=["ceiling_insufficient"],
            abstained=top.abstained,
        )

    lo, hi = 0.0, eps_max
    best = top
    while hi - lo > cfg.eps_tol:
        mid = 0.5 * (lo + hi)
        res = run(mid)
        if res.success:
            hi, best = mid, res
        else:
            lo = mid
    return AttackResult(
        final_x=best.final_x,
        success=True,
        distortion=hi,
        queries=queries,
        iterations=probes,
        hyperparams=hyper,
        seed=seed,
        abstained=best.abstained,
    )
