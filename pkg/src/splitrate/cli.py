"""Command line entry point.

``splitrate run <config.yaml | builtin> [--seed N] [--max-iters N] [--out DIR]``
``splitrate list``
``splitrate validate <config.yaml>``

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures. ``SPLITRATE_OUT`` overrides the output directory unless ``--out``
is given.
"""

import argparse
import json
import logging
import sys

from .exceptions import ConfigError, NumericalError
from .experiments import builtin_config, list_experiments, load_config, resolve_config, run_experiment

log = logging.getLogger("splitrate")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser():
    parser = argparse.ArgumentParser(prog="splitrate",
                                     description="Fixed-point splitting experiments with rate diagnostics.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a YAML file or a built-in name")
    run.add_argument("config", help="path to a YAML config or a built-in experiment name")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--max-iters", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory")
    sub.add_parser("list", help="list built-in experiments")
    val = sub.add_parser("validate", help="check a YAML config without running it")
    val.add_argument("config")
    return parser


def _cmd_run(args):
    cfg = resolve_config(args.config)
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be nonnegative")
    if args.max_iters is not None and args.max_iters < 1:
        raise ConfigError("--max-iters must be positive")
    log.info("running %s", cfg.name)
    summary = run_experiment(cfg, out_dir=args.out, seed=args.seed, max_iters=args.max_iters)
    report = {"name": summary.name, "summary_json": summary.paths.get("summary_json"),
              "aggregate": summary.aggregate, "checks": summary.checks,
              "seconds": round(summary.timing["total"], 3)}
    print(json.dumps(report, indent=2, default=str))


def _cmd_list(args):
    for name in list_experiments():
        print(f"{name:28s} {builtin_config(name).description}")


def _cmd_validate(args):
    cfg = load_config(args.config)
    print(f"{args.config}: valid ({cfg.name}, algorithm {cfg.algorithm.kind})")


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "list": _cmd_list, "validate": _cmd_validate}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
