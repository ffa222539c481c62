"""Experiment orchestration: config -> attacks -> diagnostics -> report.

One experiment is one JSON config file and produces one report.  Every
attack result carries its hyperparameters and seed, and the report echoes
the full config, so a report alone suffices to rerun the experiment.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .attacks import (
    AttackConfig,
    AttackGoal,
    boundary_attack,
    bpda_wrap,
    eot_wrap,
    fgsm,
    min_distortion,
    nes,
    pgd,
    random_search,
    spatial_bruteforce,
    spsa,
    transfer_attack,
    zoo_fd,
)
from .data import load_dataset
from .diagnostics import (
    Verdict,
    ablation_check,
    aggregate_per_example,
    adversarial_risk,
    build_accuracy_curve,
    build_accuracy_curve_from_min_dist,
    build_roc,
    check_budget_monotonicity,
    check_convergence_doubling,
    check_fixed_randomness,
    check_high_distortion_floor,
    check_iterative_vs_single,
    check_unbounded_reaches_total,
    check_whitebox_dominance,
    detector_scores,
    roc_auc,
)
from .errors import AttackInapplicable, ConfigError, GradientUnavailable
from .models import ABSTAIN, DefenseWrapper, MlpClassifier, build_model, unwrap_fully
from .numerics import MlpParams, Rng, init_mlp, load_params, sgd_train
from .threat import ThreatModel

WHITEBOX_ATTACKS = {"fgsm", "pgd"}
BLACKBOX_ATTACKS = {"spsa", "nes", "zoo_fd", "boundary", "random_search", "spatial", "transfer"}

ALL_DIAGNOSTICS = [
    "sanity.iterative_vs_single",
    "sanity.budget_monotone",
    "sanity.high_distortion_floor",
    "curve.unbounded_total",
    "masking.whitebox_dominance",
    "convergence.doubling",
    "randomness.fixed",
    "ablation.undefended",
    "report.per_example",
]

_ATTACK_FNS = {
    "fgsm": fgsm,
    "pgd": pgd,
    "spsa": spsa,
    "nes": nes,
    "zoo_fd": zoo_fd,
    "boundary": boundary_attack,
    "random_search": random_search,
    "min_distortion": min_distortion,
}


@dataclass
class ExperimentConfig:
    seed: int
    model: str
    dataset: str
    threat: ThreatModel
    attacks: list = field(default_factory=list)
    params_file: str | None = None
    train: dict = field(default_factory=lambda: {"hidden": 16, "epochs": 60, "lr": 0.5})
    n_examples: int | None = None
    diagnostics: list | str = "all"
    curve: dict | None = None
    strict: bool = True
    jobs: int = 1
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        try:
            seed = int(d["seed"])
        except KeyError:
            raise ConfigError("config requires a seed")
        for key in ("model", "dataset", "threat"):
            if key not in d:
                raise ConfigError(f"config requires {key!r}")
        attacks = d.get("attacks", [])
        for a in attacks:
            if "name" not in a:
                raise ConfigError(f"attack entry without a name: {a}")
            if a["name"] not in _ATTACK_FNS and a["name"] != "transfer" and a["name"] != "spatial":
                raise ConfigError(f"unknown attack {a['name']!r}")
        return cls(
            seed=seed,
            model=d["model"],
            dataset=d["dataset"],
            threat=ThreatModel.from_config(d["threat"]),
            attacks=attacks,
            params_file=d.get("params_file"),
            train=d.get("train", {"hidden": 16, "epochs": 60, "lr": 0.5}),
            n_examples=d.get("n_examples"),
            diagnostics=d.get("diagnostics", "all"),
            curve=d.get("curve"),
            strict=bool(d.get("strict", True)),
            jobs=int(d.get("jobs", 1)),
            raw=dict(d),
        )

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}")
        return cls.from_dict(d)

    def enabled_diagnostics(self):
        if self.diagnostics == "all":
            return list(ALL_DIAGNOSTICS)
        return list(self.diagnostics)


def _attack_config_from_entry(entry, tm):
    kwargs = {}
    fields = {
        "iterations",
        "step_size",
        "restarts",
        "first_start_at_origin",
        "eot_samples",
        "batch_size",
        "fd_delta",
        "nes_sigma",
        "coords_per_iter",
        "samples",
        "init_trials",
        "eps_tol",
        "eps_max",
        "confidence_iters",
        "spatial_max_rotation",
        "spatial_rotation_step",
        "spatial_max_shift",
    }
    for k, v in entry.items():
        if k in fields:
            kwargs[k] = v
    return AttackConfig(**kwargs)


def build_victim(config, dataset, rng):
    """Resolve the model id, training the reference MLP if no params file."""
    base_params = {}
    if config.params_file:
        base_params["mlp"] = load_params(config.params_file)
    else:
        base_params["mlp"] = train_reference_mlp(
            dataset,
            rng,
            hidden=int(config.train.get("hidden", 16)),
            epochs=int(config.train.get("epochs", 60)),
            lr=float(config.train.get("lr", 0.5)),
        )
    # a linear base model trained as a single-layer network
    if config.model.split("+")[0] == "linear":
        lin = train_reference_mlp(dataset, rng, hidden=0, epochs=int(config.train.get("epochs", 60)), lr=float(config.train.get("lr", 0.5)))
        w = lin.weights[0][0] - lin.weights[0][1]
        b = lin.biases[0][0] - lin.biases[0][1]
        base_params["linear"] = (w, b)
    return build_model(config.model, base_params, box=(config.threat.box_lo, config.threat.box_hi))


def train_reference_mlp(dataset, rng, hidden=16, epochs=60, lr=0.5):
    """Train the reference victim on the experiment dataset; deterministic."""
    dim = dataset.inputs.shape[1]
    dims = [dim, dataset.num_classes] if hidden == 0 else [dim, hidden, dataset.num_classes]
    params = init_mlp(dims, rng.fork())
    return sgd_train(params, dataset.inputs, dataset.labels, epochs, lr, rng.fork())


def _resolve_attack(entry, clf, tm, cfg):
    """Map a config entry to (callable(x, y, rng) -> AttackResult, label)."""
    name = entry["name"]
    label = entry.get("label", name)
    model = clf
    if entry.get("bpda"):
        model = bpda_wrap(clf, surrogate="identity")
    if entry.get("eot"):
        model = eot_wrap(model, int(entry.get("eot_samples", cfg.eot_samples)))
    goal_cfg = entry.get("goal", {"mode": "untargeted"})
    goal = AttackGoal(
        goal_cfg.get("mode", "untargeted"), goal_cfg.get("target"), goal_cfg.get("source")
    )

    if name == "transfer":
        substitute = unwrap_fully(clf)

        def run(x, y, rng):
            return transfer_attack(substitute, clf, tm, goal, x, y, cfg, rng)

        return run, label

    if name == "spatial":
        def run_spatial(x, y, rng, _grid=None):
            return spatial_bruteforce(model, tm, goal, x, y, cfg, rng, grid_shape=_grid)

        return run_spatial, label

    fn = _ATTACK_FNS[name]

    def run(x, y, rng):
        return fn(model, tm, goal, x, y, cfg, rng)

    return run, label


def _run_matrix_row(run, dataset, rngs, jobs, grid_shape=None):
    """Run one attack over every example; order-independent determinism."""
    X, y = dataset.inputs, dataset.labels

    def one(i):
        try:
            if grid_shape is not None:
                return run(X[i], int(y[i]), rngs[i], _grid=grid_shape)
            return run(X[i], int(y[i]), rngs[i])
        except (AttackInapplicable, GradientUnavailable) as e:
            return e

    if jobs <= 1:
        return [one(i) for i in range(len(X))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(len(X))))


def run_evaluation(config, jobs=None, attack_filter=None):
    """Execute the full pipeline and return the report as a plain dict."""
    t0 = time.time()
    jobs = jobs if jobs is not None else config.jobs
    master = Rng(config.seed)
    data_rng = master.fork()
    model_rng = master.fork()
    clean_rng = master.fork()
    attack_master = master.fork()
    diag_rng = master.fork()

    dataset = load_dataset(
        config.dataset,
        rng=data_rng,
        box_lo=config.threat.box_lo,
        box_hi=config.threat.box_hi,
    )
    if config.n_examples is not None and config.n_examples < len(dataset):
        dataset = dataset.subset(np.arange(config.n_examples))
    clf = build_victim(config, dataset, model_rng)
    tm = config.threat

    # clean accuracy first; abstentions tracked separately
    clean_rngs = clean_rng.fork_many(len(dataset))
    preds = [
        clf.predict(x, rng=r if clf.randomness else None)
        for x, r in zip(dataset.inputs, clean_rngs)
    ]
    clean_correct = np.array([p == yi for p, yi in zip(preds, dataset.labels)])
    abstained = sum(1 for p in preds if p == ABSTAIN)
    clean = {
        "accuracy": float(clean_correct.mean()) if len(dataset) else float("nan"),
        "abstain_rate": abstained / len(dataset) if len(dataset) else float("nan"),
        "n": len(dataset),
    }

    entries = list(config.attacks)
    if attack_filter is not None:
        keep = set(attack_filter)
        entries = [e for e in entries if e.get("label", e["name"]) in keep or e["name"] in keep]

    attack_rows = []
    warnings = []
    entry_rngs = attack_master.fork_many(max(len(entries), 1))
    for entry, e_rng in zip(entries, entry_rngs):
        cfg = _attack_config_from_entry(entry, tm)
        label = entry.get("label", entry["name"])
        try:
            run, label = _resolve_attack(entry, clf, tm, cfg)
        except (ValueError, AttackInapplicable) as e:
            attack_rows.append(
                {"label": label, "name": entry["name"], "inapplicable": str(e), "results": None}
            )
            warnings.append(f"attack {label!r} inapplicable: {e}")
            continue
        rngs = e_rng.fork_many(len(dataset))
        grid = dataset.grid_shape if entry["name"] == "spatial" else None
        results = _run_matrix_row(run, dataset, rngs, jobs, grid_shape=grid)
        if any(isinstance(r, Exception) for r in results):
            msg = next(str(r) for r in results if isinstance(r, Exception))
            attack_rows.append(
                {"label": label, "name": entry["name"], "inapplicable": msg, "results": None}
            )
            warnings.append(f"attack {label!r} inapplicable: {msg}")
            continue
        attack_rows.append(
            {"label": label, "name": entry["name"], "entry": entry, "results": results}
        )

    applicable = [row for row in attack_rows if row["results"] is not None]
    matrix = [row["results"] for row in applicable]
    per_example_rate, per_attack_rates = (float("nan"), [])
    if matrix:
        # restrict success accounting to originally-correct examples
        idx = np.nonzero(clean_correct)[0]
        if len(idx):
            restricted = [[row[i] for i in idx] for row in matrix]
            per_example_rate, per_attack_rates = aggregate_per_example(restricted)
    if len(applicable) < len(attack_rows):
        warnings.append(
            "aggregation restricted to applicable attacks only; "
            f"{len(attack_rows) - len(applicable)} attack(s) were inapplicable"
        )

    attacks_out = []
    for row in attack_rows:
        if row["results"] is None:
            attacks_out.append(
                {
                    "label": row["label"],
                    "name": row["name"],
                    "inapplicable": row["inapplicable"],
                }
            )
            continue
        results = row["results"]
        idx = np.nonzero(clean_correct)[0]
        succ = [results[i].success for i in idx]
        attacks_out.append(
            {
                "label": row["label"],
                "name": row["name"],
                "success_rate": float(np.mean(succ)) if succ else float("nan"),
                "success_rate_all": float(np.mean([r.success for r in results])),
                "abstain_rate": float(np.mean([r.abstained for r in results])),
                "mean_queries": float(np.mean([r.queries for r in results])),
                "total_queries": int(sum(r.queries for r in results)),
                "flags": sorted({f for r in results for f in r.flags}),
                "hyperparams": results[0].hyperparams if results else {},
                "seeds": [r.seed for r in results[:1]],
            }
        )

    curves = []
    min_dist_results = None
    if config.curve:
        curve_rng = diag_rng.fork()
        mode = config.curve.get("mode", "grid")
        curve_cfg = _attack_config_from_entry(config.curve, tm)
        if mode == "auto":
            eps_max = float(config.curve.get("eps_max", tm.box_hi - tm.box_lo))
            curve_cfg.eps_max = eps_max
            goal = AttackGoal("untargeted")
            rngs = curve_rng.fork_many(len(dataset))
            min_dist_results = [
                min_distortion(clf, tm, goal, x, int(yv), curve_cfg, r)
                for x, yv, r in zip(dataset.inputs, dataset.labels, rngs)
            ]
            eps_stars = [r.distortion for r in min_dist_results]
            pts = build_accuracy_curve_from_min_dist(eps_stars, clean_correct)
            if any(not np.isfinite(e) for e in eps_stars):
                warnings.append("auto curve truncated before 100% success")
            curves.append({"mode": "auto", "points": [p.to_dict() for p in pts]})
        else:
            grid = config.curve.get("epsilons")
            if not grid:
                raise ConfigError("grid curve requires an epsilons list")
            pts = build_accuracy_curve(
                clf, dataset.inputs, dataset.labels, tm, pgd, grid, curve_cfg, curve_rng
            )
            curves.append({"mode": "grid", "points": [p.to_dict() for p in pts]})

    roc = None
    try:
        has_detector = clf.abstain_score(dataset.inputs[0], rng=diag_rng.fork()) is not None
    except (ValueError, IndexError):
        has_detector = False
    if has_detector and applicable:
        adv_inputs = [
            r.final_x for row in applicable for r in row["results"] if r.success
        ]
        if adv_inputs:
            clean_scores = detector_scores(clf, dataset.inputs, rng=diag_rng.fork())
            adv_scores = detector_scores(clf, adv_inputs, rng=diag_rng.fork())
            points = build_roc(clean_scores, adv_scores)
            roc = {"points": points, "auc": roc_auc(points)}

    verdicts = _run_diagnostics(
        config,
        clf,
        tm,
        dataset,
        clean_correct,
        attack_rows,
        curves,
        min_dist_results,
        per_example_rate,
        per_attack_rates,
        diag_rng,
    )
    if not entries:
        verdicts.append(
            Verdict("report.attacks", "inconclusive", "no attacks configured; clean accuracy only")
        )

    losses = []
    if applicable:
        first = applicable[0]["results"]
        from .attacks.base import goal_loss as _gl

        goal = AttackGoal("untargeted")
        for x, yv, r in zip(dataset.inputs, dataset.labels, first):
            z = clf.logits(r.final_x, rng=diag_rng.fork() if clf.randomness else None)
            losses.append(_gl(goal, z, int(yv))[0])
    risk = adversarial_risk(
        losses, [r.distortion for r in min_dist_results] if min_dist_results else []
    ) if losses else None

    report = {
        "config": config.raw,
        "clean": clean,
        "attacks": attacks_out,
        "per_example": {
            "rate": per_example_rate,
            "per_attack_rates": per_attack_rates,
            "convention": "success over originally-correct examples; abstention counts as defense success",
        },
        "curves": curves,
        "roc": roc,
        "risk": risk,
        "diagnostics": [v.to_dict() for v in verdicts],
        "warnings": warnings,
        "meta": {
            "tool": "advcheck",
            "version": __version__,
            "seed": config.seed,
            "runtime_seconds": time.time() - t0,
            "total_queries": int(
                sum(a.get("total_queries", 0) for a in attacks_out)
            ),
        },
    }
    return report


def _results_by_name(attack_rows, name):
    for row in attack_rows:
        if row["results"] is not None and row["name"] == name and not row.get("entry", {}).get("eot") and not row.get("entry", {}).get("bpda"):
            return row["results"]
    return None


def _run_diagnostics(
    config,
    clf,
    tm,
    dataset,
    clean_correct,
    attack_rows,
    curves,
    min_dist_results,
    per_example_rate,
    per_attack_rates,
    rng,
):
    enabled = config.enabled_diagnostics()
    verdicts = []
    goal = AttackGoal("untargeted")
    idx = np.nonzero(clean_correct)[0]
    subset = dataset.subset(idx[: min(len(idx), 50)])

    def quick_attack_on(model, iterations=None, attack=pgd):
        cfg = AttackConfig(iterations=iterations or 50)
        rngs = Rng(config.seed + 1).fork_many(len(subset))
        return [
            attack(model, tm, goal, x, int(yv), cfg, r)
            for x, yv, r in zip(subset.inputs, subset.labels, rngs)
        ]

    for check in enabled:
        try:
            if check == "sanity.iterative_vs_single":
                r_pgd = _results_by_name(attack_rows, "pgd")
                r_fgsm = _results_by_name(attack_rows, "fgsm")
                if r_pgd is None or r_fgsm is None:
                    verdicts.append(
                        Verdict(check, "inapplicable", "needs both pgd and fgsm in the attack list")
                    )
                else:
                    verdicts.append(check_iterative_vs_single(r_pgd, r_fgsm))
            elif check == "sanity.budget_monotone":
                if not curves:
                    verdicts.append(Verdict(check, "inapplicable", "no curve configured"))
                else:
                    from .diagnostics import CurvePoint

                    pts = [
                        CurvePoint(p["epsilon"], p["accuracy"], p["success"], p["n"])
                        for p in curves[0]["points"]
                    ]
                    dedup = [pts[0]] if pts else []
                    for p in pts[1:]:
                        if p.epsilon > dedup[-1].epsilon:
                            dedup.append(p)
                    verdicts.append(check_budget_monotonicity(dedup))
            elif check == "sanity.high_distortion_floor":
                half = tm.with_epsilon((tm.box_hi - tm.box_lo) / 2.0)
                if not clf.has_gradients:
                    verdicts.append(Verdict(check, "inapplicable", "model exposes no gradients"))
                else:
                    verdicts.append(
                        check_high_distortion_floor(
                            clf,
                            half,
                            subset.inputs,
                            subset.labels,
                            cfg=AttackConfig(iterations=50),
                            rng=rng.fork(),
                        )
                    )
            elif check == "curve.unbounded_total":
                if min_dist_results is None:
                    verdicts.append(
                        Verdict(check, "inapplicable", "needs an auto-mode curve (min distortion)")
                    )
                else:
                    verdicts.append(check_unbounded_reaches_total(min_dist_results))
            elif check == "masking.whitebox_dominance":
                white = {
                    row["label"]: row["results"]
                    for row in attack_rows
                    if row["results"] is not None and row["name"] in WHITEBOX_ATTACKS
                }
                black = {
                    row["label"]: row["results"]
                    for row in attack_rows
                    if row["results"] is not None and row["name"] in BLACKBOX_ATTACKS
                }
                if not white or not black:
                    verdicts.append(
                        Verdict(check, "inapplicable", "needs both white-box and black-box attacks")
                    )
                else:
                    verdicts.append(check_whitebox_dominance(white, black))
            elif check == "convergence.doubling":
                if not clf.has_gradients:
                    verdicts.append(Verdict(check, "inapplicable", "model exposes no gradients"))
                else:
                    verdicts.append(
                        check_convergence_doubling(
                            lambda n: quick_attack_on(clf, iterations=n),
                            base_iterations=50,
                            n_examples=len(subset),
                        )
                    )
            elif check == "randomness.fixed":
                verdicts.append(
                    check_fixed_randomness(clf, lambda m: quick_attack_on(m), rng.fork())
                )
            elif check == "ablation.undefended":
                if not isinstance(clf, DefenseWrapper):
                    verdicts.append(
                        Verdict(check, "inapplicable", "model is not a defense wrapper chain")
                    )
                else:
                    verdicts.append(ablation_check(clf, lambda m: quick_attack_on(m)))
            elif check == "report.per_example":
                if not per_attack_rates:
                    verdicts.append(Verdict(check, "inapplicable", "no applicable attacks"))
                else:
                    verdicts.append(
                        Verdict(
                            check,
                            "pass",
                            f"per-example worst-case rate {per_example_rate:.3f} "
                            f"vs best per-attack {max(per_attack_rates):.3f}",
                            {
                                "per_example_rate": per_example_rate,
                                "per_attack_rates": per_attack_rates,
                            },
                        )
                    )
            else:
                verdicts.append(Verdict(check, "inapplicable", "unknown check id"))
        except (ValueError, AttackInapplicable, GradientUnavailable) as e:
            verdicts.append(Verdict(check, "inconclusive", f"check errored: {e}"))
    return verdicts


def classify(model_id, params_file, x, seed=0, box=(0.0, 1.0)):
    """End-to-end single prediction through the full wrapper chain."""
    params = load_params(params_file)
    clf = build_model(model_id, {"mlp": params}, box=box)
    rng = Rng(seed)
    pred = clf.predict(np.asarray(x, dtype=np.float64), rng=rng.fork() if clf.randomness else None)
    return {"label": int(pred), "abstain": pred == ABSTAIN, "seed": seed}
