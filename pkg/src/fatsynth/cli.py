"""Command line entry point: ``fatsynth <stage> --config cfg.json [options]``.

Exit codes: 0 success, 1 usage, 2 configuration/schema, 3 data (missing
input, CRC failure, dimension mismatch), 4 numeric failure. Errors are
written to stderr as one line::

    fatsynth: error code=3 kind=ChecksumError message="..."
"""

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, load_config
from .diffusion import TrainingDiverged
from .io import ContainerError
from .pipeline import STAGES, DataError, Workspace

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_SCHEMA", "EXIT_DATA", "EXIT_NUMERIC"]

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _snr(text):
    if text.lower() in ("inf", "infinity"):
        return np.inf
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("snr must be positive")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _protocol(text):
    """``te1,dte,n`` with times in milliseconds."""
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected te1,dte,n (ms)")
    try:
        te1, dte, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse protocol {text!r}") from None
    if te1 <= 0 or dte <= 0 or n < 1:
        raise argparse.ArgumentTypeError("te1 and dte must be positive, n >= 1")
    return te1 * 1e-3, dte * 1e-3, n


def build_parser():
    p = _Parser(prog="fatsynth", description="Synthetic chemical-shift-encoded MRI pipeline.")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name in STAGES:
        s = sub.add_parser(name, help=(STAGES[name].__doc__ or name).strip().splitlines()[0])
        s.add_argument("--config", required=True, help="experiment JSON config")
        s.add_argument("--seed", type=_seed, help="master seed overriding all config seeds")
        s.add_argument("--snr", type=_snr, help="noise level (number or inf)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--protocol", type=_protocol, help="te1,dte,n with times in ms")
        s.add_argument("--slices-per-subject", type=int, help="group size for grouped confidence intervals")
        s.add_argument("--force", action="store_true", help="accept inputs produced under another config")
    return p


def _classify(exc):
    if isinstance(exc, ConfigError):
        return EXIT_SCHEMA
    if isinstance(exc, (DataError, ContainerError, FileNotFoundError, json.JSONDecodeError)):
        return EXIT_DATA
    if isinstance(exc, (FloatingPointError, TrainingDiverged, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_DATA
    return None


def _report(code, exc):
    msg = str(exc).replace("\n", " ").replace('"', "'")
    print(f'fatsynth: error code={code} kind={type(exc).__name__} message="{msg}"', file=sys.stderr)


def run(args):
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(seed=args.seed, snr=args.snr, out=args.out, protocol=args.protocol)
    if args.slices_per_subject is not None:
        if args.slices_per_subject < 1:
            raise ConfigError("--slices-per-subject must be >= 1")
        doc = dict(cfg.raw)
        doc["evaluation"] = {**doc.get("evaluation", {}), "slices_per_subject": args.slices_per_subject}
        cfg = type(cfg)(doc)
    with Workspace(cfg.doc["output_dir"], cfg, force=args.force) as ws:
        STAGES[args.command](ws)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        _report(EXIT_USAGE, e)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        run(args)
    except Exception as e:
        code = _classify(e)
        if code is None:
            raise
        _report(code, e)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
