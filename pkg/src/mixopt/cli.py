"""Command-line front end.

Usage: ``mixopt <subcommand> (--config FILE | --preset NAME) [--seed S] [--out DIR]``
with subcommands mixture, coerm, wstar, online, grouped, phase. Exit codes:
0 success, 2 configuration error, 3 invariant failure during the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .core import InvalidInputError, InvariantError
from .domains import DatasetError
from .harness import KINDS, ConfigError, load_config, preset_config, run_experiment

__all__ = ["build_parser", "main"]


class _UsageError(ConfigError):
    """Config error that should be accompanied by the usage text."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixopt",
        description="Mixture-weight estimation experiments: minimax weight learning, "
                    "weighted ERM solving, solution-map networks, online regression.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="subcommand")
    for kind in KINDS:
        sub = subparsers.add_parser(kind, help=f"run the {kind} experiment")
        sub.add_argument("--config", metavar="FILE", help="TOML experiment file")
        sub.add_argument("--preset", metavar="NAME", help="named built-in configuration")
        sub.add_argument("--seed", type=int, metavar="S",
                         help="replace the configured seed list with this one seed")
        sub.add_argument("--out", metavar="DIR", help="override the output directory")
    return parser


def _resolve_config(args):
    if args.config is not None:
        config = load_config(args.config)
        if config.kind != args.command:
            raise ConfigError(
                f"config field 'kind' is {config.kind!r} but the subcommand "
                f"is {args.command!r}"
            )
    elif args.preset is not None:
        config = preset_config(args.command, args.preset)
    else:
        raise _UsageError("one of --config or --preset is required")
    overrides = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be nonnegative, got {args.seed}")
        overrides["seeds"] = (args.seed,)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        try:
            config = dataclasses.replace(config, **overrides)
        except ConfigError:
            raise
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("mixopt: a subcommand is required", file=sys.stderr)
        return 2
    try:
        config = _resolve_config(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mixopt {args.command}: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"mixopt {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_experiment(config)
    except ConfigError as exc:
        print(f"mixopt {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, DatasetError) as exc:
        print(f"mixopt {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"mixopt {args.command}: invariant failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
