"""Command-line entry point: ``malfam <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error (including replay cache misses), 3 provider failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from malfam import pipeline
from malfam.errors import MalfamError
from malfam.pipeline import RunConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; command-line flags override it")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default: run)")
    p.add_argument("--taxonomy", help="taxonomy override file (JSON synonyms / specificity)")


def _judges(p: argparse.ArgumentParser) -> None:
    p.add_argument("--judge", action="append", dest="judge_ids", metavar="MODEL_ID",
                   help="judge model id (repeatable); judges in --config take precedence")
    p.add_argument("--samples", help="samples file (JSON Lines)")
    p.add_argument("--cache", help="response cache directory")
    p.add_argument("--cache-mode", dest="cache_mode", choices=["record", "replay", "live"])
    p.add_argument("--per-provider-limit", dest="per_provider_limit", type=int)
    p.add_argument("--global-limit", dest="global_limit", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="malfam", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("predict", help="query judges and normalize their answers")
    _common(p)
    _judges(p)
    p.add_argument("--prompt", dest="prompt_id", help="prompt template id (P0-P5)")

    p = sub.add_parser("calibrate", help="derive judge weights from the gold set")
    _common(p)
    p.add_argument("--predictions")
    p.add_argument("--gold")
    p.add_argument("--metric", dest="calibration_metric", choices=["accuracy", "macro_f1"])
    p.add_argument("--holdout-fraction", dest="holdout_fraction", type=float,
                   help="reserve this share of the gold set for evaluation only")
    p.add_argument("--split-seed", dest="split_seed", type=int)

    p = sub.add_parser("ensemble", help="aggregate predictions into one label per sample")
    _common(p)
    p.add_argument("--predictions")
    p.add_argument("--weights")
    p.add_argument("--mode", dest="ensemble_mode", choices=["uniform", "weighted", "weighted_hierarchical"])
    p.add_argument("--policy", dest="denominator_policy", choices=["valid_voters", "all_models"],
                   help="whose weights form the majority threshold")

    p = sub.add_parser("evaluate", help="score judges and ensembles against the gold set")
    _common(p)
    p.add_argument("--predictions")
    p.add_argument("--decisions", action="append", help="decisions file (repeatable); default: all in out-dir")
    p.add_argument("--gold")
    p.add_argument("--weights")
    p.add_argument("--held-out", dest="held_out", action="store_true", default=None,
                   help="score only gold samples not used for calibration")
    p.add_argument("--no-merge", dest="merge_equivalent", action="store_false", default=None,
                   help="score Trojan and Backdoor/RAT as distinct classes")
    p.add_argument("--include-zero-support", dest="include_zero_support", action="store_true", default=None)

    p = sub.add_parser("sweep", help="prompt-sensitivity sweep over P1-P5")
    _common(p)
    _judges(p)
    p.add_argument("--gold")
    p.add_argument("--weights")
    p.add_argument("--prompts", dest="sweep_prompts", type=_csv_list, help="comma-separated, e.g. P1,P2")
    p.add_argument("--mode", dest="ensemble_mode", choices=["uniform", "weighted", "weighted_hierarchical"])
    p.add_argument("--metric", dest="calibration_metric", choices=["accuracy", "macro_f1"])
    p.add_argument("--policy", dest="denominator_policy", choices=["valid_voters", "all_models"])

    p = sub.add_parser("report", help="print result tables from an output directory")
    _common(p)
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "judge_ids"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    cfg = RunConfig.load(args.config, **overrides)
    if not cfg.judges and getattr(args, "judge_ids", None):
        cfg.judges = RunConfig(judges=[{"model_id": m} for m in args.judge_ids]).judges
    return cfg


def main(argv: Sequence[str] | None = None, providers=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "predict":
            print(pipeline.cmd_predict(cfg, providers=providers))
        elif args.command == "calibrate":
            print(pipeline.cmd_calibrate(cfg))
        elif args.command == "ensemble":
            print(pipeline.cmd_ensemble(cfg))
        elif args.command == "evaluate":
            out = pipeline.cmd_evaluate(cfg)
            print((out.parent / pipeline.METRICS_TXT).read_text(encoding="utf-8"), end="")
        elif args.command == "sweep":
            out = pipeline.cmd_sweep(cfg, providers=providers)
            print((out.parent / pipeline.SWEEP_TXT).read_text(encoding="utf-8"), end="")
        elif args.command == "report":
            print(pipeline.cmd_report(cfg), end="")
    except MalfamError as exc:
        print(f"malfam {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
