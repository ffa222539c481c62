"""Command-line entry point.

Subcommands: train-reference, classify, evaluate, sanity, curve.
Exit codes: 0 success, 2 at least one diagnostic failed, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, FormatError
from .harness import ExperimentConfig, classify, run_evaluation, train_reference_mlp
from .numerics import Rng, save_params
from .report import emit_report, report_json

EXIT_OK = 0
EXIT_DIAGNOSTIC_FAIL = 2
EXIT_CONFIG_ERROR = 3


def _add_common(p):
    p.add_argument("--config", required=True, help="experiment config JSON path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory for report files")
    p.add_argument("--jobs", type=int, default=None, help="worker threads")
    p.add_argument("--attacks", default=None, help="comma-separated attack subset")


def build_parser():
    parser = argparse.ArgumentParser(prog="advcheck")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-reference", help="train the reference model and save it")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="path for the saved model file")

    p = sub.add_parser("classify", help="classify one input through the full model chain")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--input", required=True, help="JSON array of feature values")
    p.add_argument("--params", required=True, help="saved model parameters")

    for name in ("evaluate", "sanity", "curve"):
        p = sub.add_parser(name)
        _add_common(p)
    return parser


def _load_config(args):
    config = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
        config.raw["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train-reference":
            config = _load_config(args)
            from .data import load_dataset

            rng = Rng(config.seed)
            dataset = load_dataset(
                config.dataset,
                rng=rng.fork(),
                box_lo=config.threat.box_lo,
                box_hi=config.threat.box_hi,
            )
            params = train_reference_mlp(
                dataset,
                rng.fork(),
                hidden=int(config.train.get("hidden", 16)),
                epochs=int(config.train.get("epochs", 60)),
                lr=float(config.train.get("lr", 0.5)),
            )
            save_params(params, args.out)
            print(json.dumps({"saved": args.out, "layers": [w.shape for w in params.weights]}, default=str))
            return EXIT_OK

        if args.command == "classify":
            config = _load_config(args)
            x = json.loads(args.input)
            result = classify(
                config.model,
                args.params,
                x,
                seed=config.seed,
                box=(config.threat.box_lo, config.threat.box_hi),
            )
            print(json.dumps(result))
            return EXIT_OK

        config = _load_config(args)
        attack_filter = args.attacks.split(",") if args.attacks else None
        if args.command == "sanity":
            config.curve = config.curve  # diagnostics run within the normal pipeline
            config.diagnostics = "all"
        elif args.command == "curve":
            if config.curve is None:
                raise ConfigError("curve subcommand requires a 'curve' section in the config")
            config.diagnostics = ["sanity.budget_monotone", "curve.unbounded_total"]
        report = run_evaluation(config, jobs=config.jobs, attack_filter=attack_filter)
        if args.out:
            paths = emit_report(report, args.out)
            print(json.dumps({"written": paths}))
        else:
            print(report_json(report))
        failed = [d for d in report["diagnostics"] if d["status"] == "fail"]
        if failed and config.strict:
            print(
                json.dumps({"failed_diagnostics": [d["check_id"] for d in failed]}),
                file=sys.stderr,
            )
            return EXIT_DIAGNOSTIC_FAIL
        return EXIT_OK
    except (ConfigError, FormatError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
