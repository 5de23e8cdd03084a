"""Command-line interface: ``noma-weibull {sweep,figure,validate,coeffs}``."""

import argparse
import os
import sys

from .exceptions import DomainError, EvaluationError
from .metrics import DEFAULT_A_DAGGER
from .runner import (
    PRESETS,
    SpecError,
    dump_coefficients,
    load_preset,
    load_specs,
    report_json,
    run_sweep,
    validate,
    write_rows,
)
from .series import DEFAULT_MAX_TERMS, DEFAULT_TOL


def _corruption(text):
    try:
        index, factor = text.split(":")
        return int(index), float(factor)
    except ValueError:
        raise argparse.ArgumentTypeError("expected INDEX:FACTOR") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    # None keeps the value from the config file (or the library default)
    common.add_argument("--max-terms", type=_positive_int, default=None,
                        help=f"series terms per coefficient table (default {DEFAULT_MAX_TERMS})")
    common.add_argument("--tol", type=float, default=None,
                        help=f"series truncation tolerance (default {DEFAULT_TOL:g})")
    common.add_argument("--a-dagger", type=float, default=None,
                        help=f"ABER truncation point for users u >= 2 (default {DEFAULT_A_DAGGER:g})")
    common.add_argument("--workers", type=_positive_int, default=1, help="parallel rows")

    parser = argparse.ArgumentParser(
        prog="noma-weibull",
        description="Outage and ABER of MIMO-NOMA with TAS/EGC over Weibull fading.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", parents=[common], help="run a sweep from a config file")
    p.add_argument("config", help="INI file (or a preset name)")
    p = sub.add_parser("figure", parents=[common], help="run a bundled figure preset")
    p.add_argument("name", choices=PRESETS)
    p = sub.add_parser("validate", parents=[common], help="compare analytic results with simulation")
    p.add_argument("config", help="INI file (or a preset name)")
    p.add_argument("--samples", type=int, required=True, help="realizations per row")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-xi", type=_corruption, default=None, help=argparse.SUPPRESS)
    p = sub.add_parser("coeffs", parents=[common], help="dump series coefficient tables")
    p.add_argument("config", help="INI file (or a preset name)")
    return parser


def _specs(source, args):
    overrides = {"a_dagger": args.a_dagger, "tol": args.tol, "max_terms": args.max_terms}
    if not os.path.exists(source) and source in PRESETS + ("rayleigh",):
        return load_preset(source, **overrides)
    if not os.path.exists(source):
        raise SpecError(f"config file not found: {source}")
    return load_specs(source, **overrides)


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sweep(specs, args):
    columns, rows = None, []
    for spec in specs:
        cols, part = run_sweep(spec, workers=args.workers)
        if columns is None:
            columns = cols
        else:
            columns += [c for c in cols if c not in columns]
        rows.extend(part)
    # keep the trailing note column last
    columns = [c for c in columns if c != "note"] + ["note"]
    _emit(write_rows(columns, rows, args.format), args.out)
    return 0


def _validate(specs, args):
    if args.samples < 1:
        raise SpecError(f"--samples must be >= 1, got {args.samples}")
    reports = [validate(spec, args.samples, args.seed, args.corrupt_xi) for spec in specs]
    _emit(report_json(reports), args.out)
    failed = [c for r in reports for c in r["checks"] if c["status"] == "fail"]
    for c in failed:
        print(f"FAIL {c['scenario']} row {c['row']} (user {c['user']}, rho {c['rho_db']} dB, "
              f"{c['metric']})", file=sys.stderr)
    return 1 if failed else 0


def _coeffs(specs, args):
    parts = []
    for spec in specs:
        text = dump_coefficients(spec)
        header, *lines = text.splitlines()
        if not parts:
            parts.append("scenario," + header)
        parts.extend(f"{spec.name},{line}" for line in lines)
    _emit("\n".join(parts) + "\n", args.out)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "figure":
            specs = load_preset(args.name, a_dagger=args.a_dagger, tol=args.tol,
                                max_terms=args.max_terms)
            return _sweep(specs, args)
        specs = _specs(args.config, args)
        if args.command == "sweep":
            return _sweep(specs, args)
        if args.command == "validate":
            return _validate(specs, args)
        return _coeffs(specs, args)
    except (DomainError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
