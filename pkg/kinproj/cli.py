from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, CostCeilingError, KinprojError, SolverDivergenceError
from .experiments import COMMANDS
from .record import RunRecorder
from .runconfig import RunConfig, load_config, validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_COST = 4


def exit_code(exc: KinprojError) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, SolverDivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(exc, CostCeilingError):
        return EXIT_COST
    return 1


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="[%(name)s] %(message)s",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinproj",
        description="Projective integration for kinetic equations in the diffusion limit.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--workers", type=int, default=None, help="sweep worker processes (overrides workers)")
    parser.add_argument("--verbose", action="store_true", help="log every outer step")
    return parser


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    cfg = cfg.with_overrides(
        output_dir=str(args.out) if args.out is not None else None,
        workers=args.workers,
    )
    validate(cfg)
    return cfg


def run(args: argparse.Namespace) -> int:
    try:
        cfg = apply_overrides(load_config(args.config), args)
        recorder = RunRecorder(args.command, Path(cfg.output_dir))
        COMMANDS[args.command](cfg, recorder)
    except KinprojError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return exit_code(exc)

    summary = recorder.save()
    print(f"{args.command}: wrote {len(recorder.files)} files to {cfg.output_dir}")
    for key, value in recorder.results.items():
        print(f"  {key}: {value}")
    for note in recorder.notes:
        print(f"  note: {note}")
    logger.info("summary written to %s", summary)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    raise SystemExit(run(args))
