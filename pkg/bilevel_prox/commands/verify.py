# bilevel_prox/commands/verify.py
import logging
from typing import Optional, Tuple, Union

from ..exceptions import EXIT_CERTIFICATE_FAILURE, DimensionMismatchError, TraceFileError
from ..models.problems import SbpProblem, SmpecProblem
from ..models.trace import TraceRecord
from ..services.sbp_solver import SbpSolver
from ..services.serializers import read_trace_rows, row_to_record
from ..services.smpec_solver import SmpecSolver
from .problem_file import build_problem, load_problem_file

logger = logging.getLogger(__name__)

Problem = Union[SbpProblem, SmpecProblem]


def _psi(prob: Problem, eps: float):
    if isinstance(prob, SbpProblem):
        return SbpSolver.penalized(prob, eps)
    return SmpecSolver.scaled_f(prob, eps)


def _verify_record(prob: Problem, record: TraceRecord, y) -> bool:
    if isinstance(prob, SbpProblem):
        return SbpSolver.verify_step(prob, record, y)
    return SmpecSolver.verify_step(prob, record, y)


def first_failing_row(trace_path: str, prob: Problem) -> Tuple[int, Optional[TraceRecord]]:
    """Replay every stored certificate; returns (rows checked, first failing record or None)"""
    rows = read_trace_rows(trace_path)
    if not rows:
        raise TraceFileError("trace file has no rows")

    records = []
    for i, row in enumerate(rows):
        record = row_to_record(row)
        if record.k != i:
            raise TraceFileError(f"rows are not contiguous: row {i} has k={record.k}")
        if record.x is None or record.x.size != prob.dim:
            got = 0 if record.x is None else record.x.size
            raise DimensionMismatchError(f"row {i} holds a point of dimension {got}, problem has {prob.dim}")
        if record.eps is not None:
            record.cert = row_to_record(row, _psi(prob, record.eps)).cert
        records.append(record)

    checked = 0
    for record, nxt in zip(records, records[1:]):
        if record.cert is None:
            continue
        checked += 1
        if not _verify_record(prob, record, nxt.x):
            return checked, record
    if records[-1].cert is not None:
        raise TraceFileError(f"row {records[-1].k} carries a step but no next iterate")
    return checked, None


def verify_command(trace_path: str, problem_path: str) -> int:
    """Re-check the certificates of a trace against its problem file; returns the exit code"""
    prob = build_problem(load_problem_file(problem_path))
    checked, failed = first_failing_row(trace_path, prob)
    if failed is not None:
        cert = failed.cert
        print(
            f"certificate failed at row k={failed.k}: eta1={cert.eta1:.6e} eta2={cert.eta2:.6e} "
            f"eta_k={cert.eta_budget:.6e} residual={cert.residual_norm:.6e}"
        )
        return EXIT_CERTIFICATE_FAILURE
    logger.info(f"{checked} certificates verified")
    print(f"verified {checked} certificates")
    return 0
