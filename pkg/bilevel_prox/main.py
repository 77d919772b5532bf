# bilevel_prox/main.py

import logging
import os
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from .commands import build_parser, run_command, verify_command
from .config import apply_settings, load_settings
from .exceptions import EXIT_PARSE_ERROR, BilevelError

logger = logging.getLogger(__name__)


def configure_logging(quiet: bool = False) -> None:
    level = logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    logging.getLogger().setLevel(level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet)

    try:
        if args.config:
            if not os.path.isfile(args.config):
                raise BilevelError(f"settings file not found: {args.config}", exit_code=EXIT_PARSE_ERROR)
            try:
                apply_settings(load_settings(args.config))
            except ValidationError as e:
                raise BilevelError(f"invalid settings file: {e}", exit_code=EXIT_PARSE_ERROR)
            logger.info(f"settings loaded from {args.config}")

        if args.command == "run":
            return run_command(
                args.problem,
                args.output,
                max_iter=args.max_iter,
                eps0=args.eps0,
                ref_file=args.ref_file,
                seed=args.seed,
            )
        return verify_command(args.trace, args.problem)
    except BilevelError as e:
        logger.error(f"{args.command} failed: {e.detail}")
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
