"""Command line entry point: ``completion-detect {synth,validate,run,report}``.

Exit status: 0 success, 1 usage/config error, 2 data validation error,
3 training failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, metrics
from .core import DataError, load_dataset, save_dataset
from .synth import generate, load_synth_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _cmd_synth(args) -> int:
    try:
        config = load_synth_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"synth: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    dataset = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out / "manifest.csv", out / "features")
    print(
        f"wrote {len(dataset)} sequences to {out} "
        f"(separation {config.separation:.3g} noise std)"
    )
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        dataset = load_dataset(args.manifest, args.features_dir)
    except DataError as exc:
        print(f"validate: {exc}", file=sys.stderr)
        return EXIT_DATA
    n_complete = sum(s.meta.is_complete for s in dataset)
    print(
        f"ok: {len(dataset)} sequences ({n_complete} complete), "
        f"{len(dataset.actions)} action(s), {len(dataset.subjects)} subject(s)"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    overrides = {}
    if args.output_dir:
        overrides["output_dir"] = Path(args.output_dir)
    try:
        config = harness.load_experiment_config(args.config, **overrides)
    except harness.ConfigError as exc:
        print(f"run: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = harness.run_loso(config)
    except DataError as exc:
        print(f"run: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except harness.TrainingFailure as exc:
        print(f"run: training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    print(metrics.format_summary(result.summary))
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        summary = harness.recompute_summary(args.run_dir)
    except (OSError, ValueError, KeyError) as exc:
        print(f"report: cannot read run outputs: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.json:
        sys.stdout.write(harness.summary_json(summary))
    else:
        print(metrics.format_summary(summary))
    if args.check:
        stored = harness.read_summary(args.run_dir)
        if stored != summary:
            print("report: recomputed summary differs from summary.json", file=sys.stderr)
            return EXIT_DATA
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="completion-detect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset from a [synth] config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="directory for manifest.csv and features/")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="load and check a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-dir", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="leave-one-subject-out experiment from an [experiment] config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override output_dir from the config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="recompute summary tables from a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--json", action="store_true", help="emit the summary as JSON")
    p.add_argument("--check", action="store_true",
                   help="fail unless the recomputed summary equals summary.json")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
