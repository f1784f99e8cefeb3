"""Command-line interface.

Subcommands: gen-data, train, corrupt, eval, diversity, importance, report.
Every subcommand accepts --config (flat key=value file) plus flag overrides;
failures exit nonzero with a single machine-parsable ``category: message``
line on stderr.
"""

from __future__ import annotations

import argparse
import sys

from .config import build_config
from .errors import (
    BadConfigError,
    BadKError,
    DegenerateCloudError,
    EmptyEvalError,
    FormatError,
    LengthMismatchError,
    NonFiniteLossError,
    PCEnsembleError,
    TooFewPointsError,
    ZeroReferenceError,
)
from . import pipeline

_STAGES = {
    "gen-data": pipeline.run_gen_data,
    "train": pipeline.run_train,
    "corrupt": pipeline.run_corrupt,
    "eval": pipeline.run_eval,
    "diversity": pipeline.run_diversity,
    "importance": pipeline.run_importance,
    "report": pipeline.run_report,
}

_CATEGORIES = (
    (BadConfigError, "config"),
    (FormatError, "format"),
    (TooFewPointsError, "corrupt"),
    (NonFiniteLossError, "train"),
    (ZeroReferenceError, "eval"),
    (LengthMismatchError, "eval"),
    (EmptyEvalError, "eval"),
    (BadKError, "geometry"),
    (DegenerateCloudError, "geometry"),
    (PCEnsembleError, "error"),
    (OSError, "io"),
)


def _categorize(exc: BaseException) -> str:
    for klass, category in _CATEGORIES:
        if isinstance(exc, klass):
            return category
    return "error"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcensemble",
        description="Robust point-cloud classification with partial-sample ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _STAGES.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--k-tilde", type=int, dest="k_tilde", help="members per mechanism")
        p.add_argument("--aggregate", choices=("mean", "majority"), help="headline aggregation")
        p.add_argument("--severity", type=int, help="restrict corruption severity (1..5)")
        p.add_argument("--family", help="restrict corruption family, or 'all'")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: str(value)
        for key, value in (
            ("seed", args.seed),
            ("out", args.out),
            ("k_tilde", args.k_tilde),
            ("aggregate", args.aggregate),
            ("severity", args.severity),
            ("family", args.family),
        )
        if value is not None
    }
    try:
        cfg = build_config(args.config, overrides)
        _STAGES[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(f"{_categorize(exc)}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
