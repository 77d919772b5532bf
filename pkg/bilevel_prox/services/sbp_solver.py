# bilevel_prox/services/sbp_solver.py
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..exceptions import BilevelError, ScheduleError
from ..models.certificates import ProxSubproblem, StepCertificate
from ..models.functions import Sum, Vector
from ..models.problems import SbpProblem, Schedule
from ..models.trace import Trace, TraceRecord
from .convex_core import eval_fn
from .gap_stopping import step_stop_check
from .inner_solver import InnerSolver

logger = logging.getLogger(__name__)


def reference_distance(x: Vector, ref: Optional[np.ndarray]) -> Optional[float]:
    """Distance from x to the nearest reference point, None without a reference"""
    if ref is None or len(ref) == 0:
        return None
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    return float(np.min(np.linalg.norm(ref - x, axis=1)))


class SbpSolver:
    @staticmethod
    def validate_schedule(s: Schedule) -> bool:
        return bool(
            s.eps_0 > 0
            and 0 < s.p <= 1
            and 0 < s.lambda_lo <= s.lambda_hi
            and s.eta_0 > 0
            and s.q > 1
        )

    @staticmethod
    def penalized(prob: SbpProblem, eps: float) -> Sum:
        """psi_k = g + eps_k f; the g atoms come first in the flattened order"""
        return Sum(((1.0, prob.g), (eps, prob.f)))

    @staticmethod
    def sbp_step(
        prob: SbpProblem, x_k: Vector, k: int, s: Schedule, eta: Optional[float] = None
    ) -> Tuple[Vector, StepCertificate]:
        psi = SbpSolver.penalized(prob, s.eps(k))
        sub = ProxSubproblem(psi=psi, anchor=x_k, lam=s.lam(k), C=prob.C, eta_budget=s.eta(k) if eta is None else eta)
        return InnerSolver.solve_prox(sub)

    @staticmethod
    def verify_step(prob: SbpProblem, record: TraceRecord, y: Vector) -> bool:
        """Replay the certificate stored on a record against the next iterate"""
        if record.cert is None:
            return False
        psi = SbpSolver.penalized(prob, record.eps)
        return InnerSolver.verify_certificate(psi, prob.C, record.x, record.lam, y, record.cert)

    @staticmethod
    def sbp_run(
        prob: SbpProblem,
        s: Schedule,
        max_iter: Optional[int] = None,
        ref: Optional[Sequence] = None,
        eps0: Optional[float] = None,
    ) -> Trace:
        if not SbpSolver.validate_schedule(s):
            raise ScheduleError(f"schedule violates the decay hypotheses: {s.model_dump()}")
        max_iter = settings.max_iter if max_iter is None else max_iter
        trace = Trace(kind="sbp")
        x = prob.x0.copy()
        logger.info(f"SBP run started: dim={prob.dim}, max_iter={max_iter}")

        for k in range(max_iter):
            record = TraceRecord(
                k=k,
                x=x,
                f_value=eval_fn(prob.f, x),
                g_value=eval_fn(prob.g, x),
                eps=s.eps(k),
                lam=s.lam(k),
                eta=s.eta(k),
                dist_to_ref=reference_distance(x, ref),
            )
            try:
                x_next, cert = SbpSolver.sbp_step(prob, x, k, s)
                stop = eps0 is not None and step_stop_check(x, x_next, record.lam, record.eps, eps0)
                if stop:
                    x_next, cert = SbpSolver._refine(prob, x, k, s, x_next, cert)
                    stop = step_stop_check(x, x_next, record.lam, record.eps, eps0)
            except BilevelError as e:
                logger.error(f"SBP run aborted at k={k}: {e.detail}")
                trace.records.append(record)
                trace.stop_reason = "solver_failure"
                trace.failure = e.detail
                return trace

            record.step_norm = float(np.linalg.norm(x_next - x))
            record.cert = cert
            record.stop_flag = stop
            trace.records.append(record)
            logger.debug(f"k={k} f={record.f_value:.6e} g={record.g_value:.6e} step={record.step_norm:.3e}")
            x = x_next
            if stop:
                trace.stop_reason = "stopping_criterion"
                break

        k_final = len(trace.records)
        trace.records.append(
            TraceRecord(
                k=k_final,
                x=x,
                f_value=eval_fn(prob.f, x),
                g_value=eval_fn(prob.g, x),
                dist_to_ref=reference_distance(x, ref),
            )
        )
        logger.info(f"SBP run finished after {trace.iterations} iterations ({trace.stop_reason})")
        return trace

    @staticmethod
    def _refine(prob, x, k, s, x_next, cert):
        # stopping rows carry a near-exact certificate so their witness can be certified
        try:
            return SbpSolver.sbp_step(prob, x, k, s, eta=min(settings.witness_eta, s.eta(k)))
        except BilevelError as e:
            logger.warning(f"could not tighten the stopping step at k={k}: {e.detail}")
            return x_next, cert
