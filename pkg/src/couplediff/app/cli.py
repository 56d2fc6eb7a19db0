"""Command line: ``couplediff {restore,verify,sweep,converge} [--config F] [--out D] [--seed N] [--quiet]``.

Exit codes: 0 success, 1 checks ran but did not all pass, 2 invalid
configuration or model assumptions, 3 numerical failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..model import ValidationError
from ..solver import NumericalError
from .config import ConfigError, default_config, load_config
from .images import ImageFormatError
from .pipeline import COMMANDS, format_summary

EXIT_OK = 0
EXIT_CHECKS = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="couplediff", description="Coupled edge-aware diffusion: restoration and checks.")
    p.add_argument("command", choices=sorted(COMMANDS), help="what to run")
    p.add_argument("--config", help="key=value configuration file (defaults are used if omitted)")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=_seed, default=None, help="RNG seed; overrides run.seed")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")

    def fail(code, kind, exc):
        print(f"couplediff {args.command}: {kind}: {exc}", file=sys.stderr)
        return code

    try:
        cfg = load_config(args.config) if args.config else default_config(args.command)
        result = COMMANDS[args.command](cfg, args.out, args.seed)
    except (ConfigError, ValidationError) as exc:
        return fail(EXIT_VALIDATION, "validation failure", exc)
    except NumericalError as exc:
        return fail(EXIT_NUMERICAL, "numerical failure", exc)
    except (OSError, ImageFormatError) as exc:
        return fail(EXIT_IO, "I/O failure", exc)
    except ValueError as exc:
        return fail(EXIT_VALIDATION, "validation failure", exc)
    if not args.quiet:
        sys.stdout.write(format_summary(result.summary))
        print(f"outputs written to {args.out}")
    return EXIT_OK if result.ok else EXIT_CHECKS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
