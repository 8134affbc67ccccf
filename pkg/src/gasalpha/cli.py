"""Command-line entry point: ``gasalpha <command> --config run.yaml``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import GasError
from .pipeline import STAGES, RunContext, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasalpha", description="Alpha mining, selection and ensemble trading pipeline.")
    p.add_argument("command", choices=[*STAGES, "all"], help="stage to run, or all stages in order")
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config's global seed")
    p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    p.add_argument("--profile", choices=["desk", "paper"], default="desk", help="scale preset")
    p.add_argument("--out", default=None, help="output folder (default: the config's `out`)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg, base_dir, out = load_config(args.config, args.profile, args.seed, args.out)
        run(args.command, RunContext(cfg, base_dir, out, args.threads))
    except GasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
