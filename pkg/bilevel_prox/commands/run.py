# bilevel_prox/commands/run.py
import logging
from typing import Optional

import numpy as np

from ..exceptions import EXIT_SOLVER_FAILURE
from ..models.trace import Trace
from ..services.gap_stopping import gap_prox_run, penalty_solve
from ..services.sbp_solver import SbpSolver
from ..services.serializers import write_trace
from ..services.smpec_solver import SmpecSolver
from .problem_file import ProblemFile, build_problem, load_problem_file, load_reference

logger = logging.getLogger(__name__)


def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.6e}"


def format_summary(trace: Trace) -> str:
    """One-line run summary"""
    last = trace.final
    gap_name = "g" if trace.kind == "sbp" else "gap"
    return (
        f"kind={trace.kind} f={_fmt(last.f_value)} {gap_name}={_fmt(last.g_value)} "
        f"dist_to_ref={_fmt(last.dist_to_ref)} iterations={trace.iterations} stop={trace.stop_reason}"
    )


def solve(
    pf: ProblemFile,
    max_iter: Optional[int] = None,
    eps0: Optional[float] = None,
    ref: Optional[np.ndarray] = None,
) -> Trace:
    """Build the problem a file describes and run the matching method"""
    prob = build_problem(pf)
    max_iter = max_iter if max_iter is not None else pf.max_iter
    eps0 = eps0 if eps0 is not None else pf.eps0
    if ref is None and pf.reference is not None:
        ref = np.asarray(pf.reference, dtype=np.float64)

    if pf.kind == "sbp":
        return SbpSolver.sbp_run(prob, pf.schedule, max_iter=max_iter, ref=ref, eps0=eps0)
    if pf.kind == "smpec":
        return SmpecSolver.smpec_run(prob, pf.schedule, max_iter=max_iter, ref=ref, eps0=eps0)
    if pf.kind == "penalty":
        mus = pf.mu_schedule()
        if max_iter is not None:
            mus = mus[:max_iter]
        return penalty_solve(
            prob,
            mus,
            inner_tol=pf.inner_tol if pf.inner_tol is not None else 1e-6,
            x_tilde=None if pf.x_tilde is None else np.asarray(pf.x_tilde, dtype=np.float64),
            ref=ref,
        )
    return gap_prox_run(
        prob,
        pf.schedule,
        max_iter=max_iter,
        ref=ref,
        eps0=eps0,
        inner_tol=pf.inner_tol if pf.inner_tol is not None else 1e-8,
    )


def run_command(
    problem_path: str,
    output_path: str,
    max_iter: Optional[int] = None,
    eps0: Optional[float] = None,
    ref_file: Optional[str] = None,
    seed: int = 0,
) -> int:
    """Run a problem file, write its trace and print the summary; returns the exit code"""
    pf = load_problem_file(problem_path)
    ref = load_reference(ref_file) if ref_file else None
    # every solver path is deterministic: ties go to the lowest index
    logger.debug(f"seed={seed}")
    trace = solve(pf, max_iter=max_iter, eps0=eps0, ref=ref)
    write_trace(trace, output_path)
    logger.info(f"trace written to {output_path}")
    print(format_summary(trace))
    if trace.aborted:
        print(f"solver failure: {trace.failure}")
        return EXIT_SOLVER_FAILURE
    return 0
