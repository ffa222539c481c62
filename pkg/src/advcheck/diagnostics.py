"""The evaluation checklist as executable checks.

Each check inspects recorded attack results (or drives a small number of
extra attack runs) and returns a Verdict with a stable id, a pass / fail /
inconclusive status, and concrete evidence.  Statistical slack uses a
3-sigma binomial bound throughout; small samples yield ``inconclusive``
rather than a spurious pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks.base import AttackConfig
from .attacks.gradient import pgd
from .models import DefenseWrapper, unwrap_fully, fix_randomness
from .numerics import softmax
from .threat import project


@dataclass
class Verdict:
    check_id: str
    status: str  # pass | fail | inconclusive | inapplicable
    summary: str
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "check_id": self.check_id,
            "status": self.status,
            "summary": self.summary,
            "evidence": self.evidence,
        }


@dataclass
class CurvePoint:
    epsilon: float
    model_accuracy: float
    attack_success: float
    n: int

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "accuracy": self.model_accuracy,
            "success": self.attack_success,
            "n": self.n,
        }


def binomial_std(p, n):
    if n <= 0:
        return float("inf")
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))


def _success_array(results):
    return np.array([bool(r.success) for r in results])


# ---------------------------------------------------------------------------
# Sanity checks
# ---------------------------------------------------------------------------


def check_iterative_vs_single(results_pgd, results_fgsm):
    """Iterative attacks must not lose to their single-step baseline."""
    if len(results_pgd) != len(results_fgsm):
        raise ValueError("pgd/fgsm result sets cover different examples")
    p = _success_array(results_pgd)
    f = _success_array(results_fgsm)
    rate_p, rate_f = p.mean(), f.mean()
    wins = [int(i) for i in np.nonzero(f & ~p)[0]]
    if rate_f > rate_p:
        return Verdict(
            "sanity.iterative_vs_single",
            "fail",
            f"single-step success {rate_f:.3f} exceeds iterative {rate_p:.3f}",
            {"pgd_rate": float(rate_p), "fgsm_rate": float(rate_f), "fgsm_only_examples": wins},
        )
    note = " (rates equal; non-strict allowed at saturation)" if rate_f == rate_p else ""
    return Verdict(
        "sanity.iterative_vs_single",
        "pass",
        f"iterative {rate_p:.3f} >= single-step {rate_f:.3f}{note}",
        {"pgd_rate": float(rate_p), "fgsm_rate": float(rate_f), "fgsm_only_examples": wins},
    )


def check_budget_monotonicity(curve):
    """Attack success must not drop as the budget grows, beyond binomial slack."""
    eps = [pt.epsilon for pt in curve]
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise ValueError("curve epsilons must be strictly increasing")
    worst = None
    for a, b in zip(curve, curve[1:]):
        drop = a.attack_success - b.attack_success
        slack = 2.0 * binomial_std(a.attack_success, min(a.n, b.n))
        if drop > 0 and (worst is None or drop - slack > worst[0]):
            worst = (drop - slack, a, b, drop, slack)
    if worst is None:
        return Verdict("sanity.budget_monotone", "pass", "attack success nondecreasing in budget")
    margin, a, b, drop, slack = worst
    ev = {
        "epsilon_pair": [a.epsilon, b.epsilon],
        "success_pair": [a.attack_success, b.attack_success],
        "drop": drop,
        "slack": slack,
    }
    if margin > 0:
        return Verdict(
            "sanity.budget_monotone",
            "fail",
            f"success drops {drop:.3f} from eps={a.epsilon:g} to eps={b.epsilon:g} (slack {slack:.3f})",
            ev,
        )
    return Verdict(
        "sanity.budget_monotone",
        "inconclusive",
        f"success dips {drop:.3f} within statistical slack {slack:.3f} at eps={a.epsilon:g}->{b.epsilon:g}",
        ev,
    )


def check_high_distortion_floor(clf, tm_half, X, y, attack=pgd, cfg=None, rng=None):
    """At budget = half the box range (l-inf), accuracy must fall to chance.

    The candidate set always includes the mid-box constant input, which is
    reachable for every example at this budget, so no model can legitimately
    stay above random guessing.
    """
    if tm_half.p != np.inf:
        raise ValueError("high-distortion floor check is defined for l-inf")
    cfg = cfg or AttackConfig()
    X = np.asarray(X, dtype=np.float64)
    gray = np.full(X.shape[1], (tm_half.box_lo + tm_half.box_hi) / 2.0)
    correct = 0
    rngs = rng.fork_many(len(X)) if rng else [None] * len(X)
    for xi, yi, ri in zip(X, y, rngs):
        from .attacks.base import AttackGoal

        res = attack(clf, tm_half, AttackGoal("untargeted"), xi, yi, cfg, ri)
        if res.success:
            continue
        # fall back to the gray candidate
        cand = project(tm_half, xi, gray)
        pred = clf.predict(cand, rng=ri.fork() if (ri and clf.randomness) else None)
        if pred == yi:
            correct += 1
    n = len(X)
    acc = correct / n
    chance = 1.0 / clf.num_classes
    bound = chance + 3.0 * binomial_std(chance, n)
    ev = {"accuracy": acc, "chance": chance, "bound": bound, "n": n}
    if acc > bound:
        return Verdict(
            "sanity.high_distortion_floor",
            "fail",
            f"accuracy {acc:.3f} above chance bound {bound:.3f} at half-range budget",
            ev,
        )
    return Verdict(
        "sanity.high_distortion_floor",
        "pass",
        f"accuracy {acc:.3f} within chance bound {bound:.3f} at half-range budget",
        ev,
    )


def check_unbounded_reaches_total(min_dist_results):
    """Every example must have a finite minimum distortion at full-box budget."""
    failures = [
        int(i)
        for i, r in enumerate(min_dist_results)
        if not r.success or not np.isfinite(r.distortion)
    ]
    if failures:
        return Verdict(
            "curve.unbounded_total",
            "fail",
            f"{len(failures)} examples never became adversarial at any budget",
            {"unreached_examples": failures},
        )
    return Verdict(
        "curve.unbounded_total",
        "pass",
        f"all {len(min_dist_results)} examples reached at some finite budget",
    )


def check_whitebox_dominance(whitebox, blackbox):
    """White-box access strictly subsumes black-box; losing to it means masking.

    ``whitebox`` and ``blackbox`` map attack name -> per-example success
    lists over the same examples.
    """
    if not whitebox or not blackbox:
        raise ValueError("need at least one attack on each side")
    w_arrays = {k: _success_array(v) if v and hasattr(v[0], "success") else np.asarray(v, bool) for k, v in whitebox.items()}
    b_arrays = {k: _success_array(v) if v and hasattr(v[0], "success") else np.asarray(v, bool) for k, v in blackbox.items()}
    n = len(next(iter(w_arrays.values())))
    w_best = np.zeros(n, dtype=bool)
    for arr in w_arrays.values():
        if len(arr) != n:
            raise ValueError("attack result sets cover different examples")
        w_best |= arr
    w_rate = w_best.mean()
    offenders = {}
    for name, arr in b_arrays.items():
        if len(arr) != n:
            raise ValueError("attack result sets cover different examples")
        rate = arr.mean()
        slack = 3.0 * binomial_std(max(rate, w_rate), n)
        if rate > w_rate + slack:
            offenders[name] = {
                "blackbox_rate": float(rate),
                "whitebox_rate": float(w_rate),
                "examples_blackbox_only": [int(i) for i in np.nonzero(arr & ~w_best)[0]],
            }
    if offenders:
        return Verdict(
            "masking.whitebox_dominance",
            "fail",
            f"black-box attacks beat best white-box attack: {sorted(offenders)} (gradient-masking signature)",
            {"offenders": offenders, "whitebox_rate": float(w_rate)},
        )
    return Verdict(
        "masking.whitebox_dominance",
        "pass",
        f"best white-box rate {w_rate:.3f} dominates all black-box attacks",
        {"whitebox_rate": float(w_rate), "blackbox_rates": {k: float(a.mean()) for k, a in b_arrays.items()}},
    )


def check_convergence_doubling(attack_with_iters, base_iterations, n_examples):
    """Doubling iterations must not improve success beyond slack.

    ``attack_with_iters(iterations) -> list of AttackResult`` reruns the
    attack with the same seeds at the given iteration count.
    """
    res_n = attack_with_iters(base_iterations)
    res_2n = attack_with_iters(2 * base_iterations)
    rate_n = _success_array(res_n).mean()
    rate_2n = _success_array(res_2n).mean()
    slack = 3.0 * binomial_std(max(rate_n, rate_2n), n_examples)
    traces = {
        "iterations": [base_iterations, 2 * base_iterations],
        "success": [float(rate_n), float(rate_2n)],
        "sample_loss_trace": res_2n[0].loss_trace if res_2n else [],
    }
    if rate_2n - rate_n > slack:
        return Verdict(
            "convergence.doubling",
            "fail",
            f"success improves {rate_n:.3f} -> {rate_2n:.3f} when doubling iterations; not converged",
            traces,
        )
    return Verdict(
        "convergence.doubling",
        "pass",
        f"success stable under iteration doubling ({rate_n:.3f} -> {rate_2n:.3f})",
        traces,
    )


def _noise_layers_only(chain):
    """Strip every wrapper except pinned noise layers, keeping nesting order."""
    from .models import NoiseWrapper

    if isinstance(chain, NoiseWrapper):
        return NoiseWrapper(_noise_layers_only(chain.inner), chain.sigma, chain.fixed_value)
    if isinstance(chain, DefenseWrapper):
        return _noise_layers_only(chain.inner)
    return chain


def check_fixed_randomness(clf, attack_on_model, rng, tolerance=0.05):
    """With randomness pinned, the attack must do about as well as on the bare model.

    The pinned noise draw turns the defense into a translated deterministic
    model, so the fair baseline is the bare model carrying the same pinned
    offset.  ``attack_on_model(model) -> list of AttackResult``.  A large gap
    means the attack (not the defense) is broken.
    """
    if clf.randomness is None:
        return Verdict(
            "randomness.fixed",
            "inapplicable",
            "model exposes no fixable randomness",
        )
    fixed = fix_randomness(clf, rng.fork())
    bare = _noise_layers_only(fixed)
    res_bare = attack_on_model(bare)
    res_fixed = attack_on_model(fixed)
    rate_bare = _success_array(res_bare).mean()
    rate_fixed = _success_array(res_fixed).mean()
    n = len(res_bare)
    slack = tolerance + 3.0 * binomial_std(max(rate_bare, rate_fixed), n)
    ev = {"bare_rate": float(rate_bare), "fixed_rate": float(rate_fixed), "slack": slack}
    if rate_fixed < rate_bare - slack:
        failing = [
            int(i)
            for i, (rb, rf) in enumerate(zip(res_bare, res_fixed))
            if rb.success and not rf.success
        ]
        ev["examples_failing_when_fixed"] = failing
        return Verdict(
            "randomness.fixed",
            "fail",
            f"attack succeeds on bare model ({rate_bare:.3f}) but not with randomness fixed ({rate_fixed:.3f})",
            ev,
        )
    return Verdict(
        "randomness.fixed",
        "pass",
        f"fixed-randomness success {rate_fixed:.3f} tracks bare-model success {rate_bare:.3f}",
        ev,
    )


def ablation_check(wrapped, attack_on_model, floor=0.9):
    """Attacking the fully-unwrapped model must clear a success floor.

    A weak result on the undefended victim means the attack itself is
    broken, not that the defense is strong.
    """
    if not isinstance(wrapped, DefenseWrapper):
        return Verdict("ablation.undefended", "inapplicable", "model is not a defense wrapper chain")
    bare = unwrap_fully(wrapped)
    results = attack_on_model(bare)
    rate = _success_array(results).mean()
    ev = {"undefended_success": float(rate), "floor": floor}
    if rate < floor:
        ev["failing_examples"] = [int(i) for i, r in enumerate(results) if not r.success]
        return Verdict(
            "ablation.undefended",
            "fail",
            f"attack reaches only {rate:.3f} on the undefended model (floor {floor}); attack is broken",
            ev,
        )
    return Verdict(
        "ablation.undefended",
        "pass",
        f"attack reaches {rate:.3f} on the undefended model",
        ev,
    )


# ---------------------------------------------------------------------------
# Aggregation, curves, ROC, risk
# ---------------------------------------------------------------------------


def aggregate_per_example(matrix):
    """Worst-case-per-example aggregation of an attacks x examples matrix.

    Returns ``(per_example_rate, per_attack_rates)`` where the per-example
    rate is mean over examples of (any attack succeeded).  The matrix must
    be complete; holes (None) are an error naming their positions.
    """
    if isinstance(matrix, np.ndarray) and matrix.dtype == np.bool_:
        if matrix.ndim != 2 or matrix.size == 0:
            raise ValueError("matrix must be non-empty and rectangular")
        return float(matrix.any(axis=0).mean()), [float(r) for r in matrix.mean(axis=1)]
    rows = []
    holes = []
    for i, row in enumerate(matrix):
        vals = []
        for j, v in enumerate(row):
            if v is None:
                holes.append((i, j))
            else:
                vals.append(bool(v.success) if hasattr(v, "success") else bool(v))
        rows.append(vals)
    if holes:
        raise ValueError(f"incomplete result matrix; holes at {holes}")
    m = np.array(rows, dtype=bool)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("matrix must be non-empty and rectangular")
    per_attack = m.mean(axis=1)
    per_example = m.any(axis=0).mean()
    return float(per_example), [float(r) for r in per_attack]


def build_accuracy_curve_from_min_dist(eps_stars, clean_correct, grid=None):
    """Threshold a per-example epsilon-star table into an accuracy curve.

    ``eps_stars[i]`` is the bisected minimum distortion for example i
    (inf when never reached); ``clean_correct[i]`` says whether the model
    was right on the clean input.  Success counts only originally-correct
    examples; accuracy at eps counts examples that are clean-correct and
    not yet attackable.
    """
    eps_stars = np.asarray(eps_stars, dtype=np.float64)
    clean_correct = np.asarray(clean_correct, dtype=bool)
    n = len(eps_stars)
    if grid is None:
        finite = np.unique(eps_stars[np.isfinite(eps_stars)])
        grid = np.concatenate([[0.0], finite])
    points = []
    n_correct = max(int(clean_correct.sum()), 1)
    for eps in grid:
        broken = (eps_stars <= eps) & clean_correct
        acc = float((clean_correct & ~broken).mean())
        succ = float(broken.sum() / n_correct)
        points.append(CurvePoint(float(eps), acc, succ, n))
    return points


def build_accuracy_curve(clf, X, y, tm, attack, eps_grid, cfg=None, rng=None):
    """Grid-mode curve: run the bounded attack once per budget value."""
    cfg = cfg or AttackConfig()
    from .attacks.base import AttackGoal

    X = np.asarray(X, dtype=np.float64)
    clean_correct = np.array(
        [clf.predict(xi, rng=rng.fork() if (rng and clf.randomness) else None) == yi for xi, yi in zip(X, y)]
    )
    n_correct = max(int(clean_correct.sum()), 1)
    points = []
    for eps in eps_grid:
        tme = tm.with_epsilon(float(eps))
        rngs = rng.fork_many(len(X)) if rng else [None] * len(X)
        broken = 0
        still_correct = 0
        for xi, yi, ci, ri in zip(X, y, clean_correct, rngs):
            if not ci:
                continue
            if eps == 0:
                still_correct += 1
                continue
            res = attack(clf, tme, AttackGoal("untargeted"), xi, yi, cfg, ri)
            if res.success:
                broken += 1
            else:
                still_correct += 1
        points.append(
            CurvePoint(float(eps), float(still_correct / len(X)), float(broken / n_correct), len(X))
        )
    return points


def build_roc(scores_clean, scores_adv):
    """Threshold sweep over all observed detector scores.

    A point (fpr, tpr, threshold) flags inputs with score >= threshold as
    adversarial.  The curve includes (0, 0) and (1, 1) and is sorted by
    false-positive rate.
    """
    scores_clean = np.asarray(scores_clean, dtype=np.float64)
    scores_adv = np.asarray(scores_adv, dtype=np.float64)
    if scores_clean.size == 0 or scores_adv.size == 0:
        raise ValueError("need scores for both clean and adversarial inputs")
    thresholds = np.unique(np.concatenate([scores_clean, scores_adv]))
    points = [(1.0, 1.0, float("-inf"))]
    for t in thresholds:
        fpr = float((scores_clean >= t).mean())
        tpr = float((scores_adv >= t).mean())
        points.append((fpr, tpr, float(t)))
    points.append((0.0, 0.0, float("inf")))
    points.sort(key=lambda p: (p[0], p[1]))
    return points


def roc_auc(points):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return float(np.trapezoid(ys, xs))


def detector_scores(clf, inputs, rng=None):
    scores = []
    for x in inputs:
        s = clf.abstain_score(x, rng=rng.fork() if (rng and clf.randomness) else None)
        if s is None:
            return None
        scores.append(s)
    return scores


def adversarial_risk(losses, eps_stars):
    """Empirical worst-case loss and minimum-distance summaries.

    Both numbers are lower bounds on the true adversarial risk: the attacks
    only approximate the inner max / min.
    """
    losses = np.asarray(losses, dtype=np.float64)
    finite = np.asarray([e for e in eps_stars if np.isfinite(e)], dtype=np.float64)
    return {
        "worst_case_loss_mean": float(losses.mean()) if losses.size else float("nan"),
        "min_dist_mean": float(finite.mean()) if finite.size else float("nan"),
        "min_dist_median": float(np.median(finite)) if finite.size else float("nan"),
        "unreached": int(len(eps_stars) - len(finite)),
    }
