"""Command-line entry point: ``closurelab {oscillator,decay,oracle,check}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, load_config, parse_config, validate
from .runner import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, run


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="closurelab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "oscillator": "random-oscillator closures against exact and sampled statistics",
        "decay": "free decay of isotropic turbulence under one closure",
        "oracle": "compare fast kernels with independent oracles",
        "check": "run the acceptance checks",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=_u64, help="override the configured seed")
        p.add_argument("--threads", type=_positive, default=1,
                       help="worker threads for Monte-Carlo sampling")
        if name == "check":
            p.add_argument("--only", type=int, nargs="+", metavar="N",
                           help="run only these numbered checks")
    return parser


def _config(args):
    if args.config:
        cfg = load_config(args.config, args.command)
    else:
        cfg = parse_config("", args.command)
    if args.seed is not None:
        cfg = validate(dataclasses.replace(cfg, seed=args.seed))
    return cfg


def _check(args) -> int:
    from .acceptance import run_all
    from .io import emit_json

    results = run_all(set(args.only) if args.only else None)
    if args.out:
        from pathlib import Path
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_json({"criteria": [dataclasses.asdict(r) for r in results]}, out / "check.json")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return _check(args)
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run(cfg, args.out, threads=args.threads)
    status = result.summary.get("status")
    print(f"{cfg.mode}: {status}, artifacts in {result.out_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
