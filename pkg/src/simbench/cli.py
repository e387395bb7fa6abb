"""Command-line interface.

One subcommand per pipeline stage (each ensures its prerequisites first,
so the stages compose), plus ``run`` for the whole pipeline and ``report``
variants for cross-run comparison.

Exit codes: 0 success, 2 configuration error, 3 backend failure,
4 invariant violation.
"""

import argparse
import sys

from . import runner
from .config import STAGES, RunConfig
from .errors import (
    BackendError,
    ConfigError,
    InvariantViolation,
    OptimizationAborted,
    SimbenchError,
)


def _add_config_arg(sub):
    sub.add_argument("config", help="path to the JSON run configuration")
    sub.add_argument("--jobs", type=int, default=None,
                     help="per-user parallelism (overrides the config)")
    sub.add_argument("--output-dir", default=None,
                     help="override the configured output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simbench",
        description="User-simulation workbench: profile optimization, "
                    "defect corpora, and the simulator/recommender arena.")
    subs = parser.add_subparsers(dest="command", required=True)

    run_cmd = subs.add_parser("run", help="execute the full stage pipeline")
    _add_config_arg(run_cmd)
    run_cmd.add_argument("--stages", nargs="+", choices=STAGES, default=None,
                         help="subset of stages to execute")

    for stage in STAGES:
        if stage == "report":
            continue
        stage_cmd = subs.add_parser(
            stage, help=f"run the {stage} stage (and its prerequisites)")
        _add_config_arg(stage_cmd)

    report_cmd = subs.add_parser(
        "report", help="emit per-run reports, or compare finished runs")
    report_cmd.add_argument("config", nargs="?", default=None,
                            help="run configuration (single-run report)")
    report_cmd.add_argument("--jobs", type=int, default=None)
    report_cmd.add_argument("--output-dir", default=None)
    report_cmd.add_argument("--compare", nargs="+", default=None,
                            metavar="RUN_DIR",
                            help="combine tables from finished run dirs")
    report_cmd.add_argument("--out", default=None,
                            help="directory for the comparison tables")
    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config)
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.output_dir is not None:
        config.output_dir = args.output_dir
    return config.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report" and args.compare:
            report = runner.combine_runs(args.compare, args.out)
            sys.stdout.write(report["metrics"])
            sys.stdout.write(report["summary"])
            return 0
        if args.command == "report" and not args.config:
            raise ConfigError(["report needs a config or --compare run dirs"])
        config = _load_config(args)
        if args.command == "run":
            artifacts = runner.run(config, stages=args.stages)
        else:
            artifacts = runner.run(config, stages=[args.command])
        for name in sorted(artifacts):
            print(f"{name}: {artifacts[name]}")
        return 0
    except ConfigError as exc:
        for problem in exc.fields:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except (BackendError, OptimizationAborted) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4
    except SimbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
