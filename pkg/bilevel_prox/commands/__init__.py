# bilevel_prox/commands/__init__.py

import argparse

from .run import run_command
from .verify import verify_command


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilevel_prox",
        description="Inexact proximal-penalization solvers for simple bilevel and simple MPEC problems",
    )
    parser.add_argument("--config", metavar="PATH", help="settings file (KEY=value lines)")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    # ✅ run
    run = sub.add_parser("run", help="solve a problem file and write its trace")
    run.add_argument("problem", help="problem file (JSON)")
    run.add_argument("output", help="trace file to write (CSV)")
    run.add_argument("--max-iter", type=int, metavar="N", help="outer iterations")
    run.add_argument("--eps0", type=float, metavar="R", help="enable the stopping criterion with this tolerance")
    run.add_argument("--ref-file", metavar="PATH", help="reference solution points (JSON)")
    run.add_argument("--seed", type=int, default=0, metavar="N", help="inner-solver tie-break seed")
    run.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    run.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    # ✅ verify
    verify = sub.add_parser("verify", help="re-check every certificate stored in a trace")
    verify.add_argument("trace", help="trace file (CSV)")
    verify.add_argument("problem", help="problem file the trace was produced from")
    verify.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    verify.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    return parser


__all__ = ["build_parser", "run_command", "verify_command"]
