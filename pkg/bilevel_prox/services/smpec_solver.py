# bilevel_prox/services/smpec_solver.py
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space

from ..config import settings
from ..exceptions import (
    BilevelError,
    GapEvaluationError,
    InnerSolverError,
    NotMonotonePlusError,
    ScheduleError,
    StepSizeError,
    UnsupportedOperationError,
)
from ..models.certificates import ProxSubproblem, StepCertificate
from ..models.functions import Quadratic, Sum, Vector
from ..models.operators import AffineOp, MonotoneOperator, affine_form
from ..models.problems import Schedule, SmpecProblem
from ..models.sets import is_compact
from ..models.trace import Trace, TraceRecord
from .convex_core import check_dim, eps_subgrad_residual, eval_fn, flatten
from .gap_stopping import dual_gap, step_stop_check
from .inner_solver import InnerSolver
from .sbp_solver import SbpSolver, reference_distance

logger = logging.getLogger(__name__)


class SmpecSolver:
    @staticmethod
    def eval_operator(F: MonotoneOperator, x: Vector) -> Vector:
        x = check_dim(F.dim, x)
        M, q = affine_form(F)
        return M @ x + q

    @staticmethod
    def check_monotone_plus(F: MonotoneOperator) -> bool:
        """<F(x) - F(y), x - y> = 0 forces F(x) = F(y)"""
        if not isinstance(F, AffineOp):
            # gradients of convex quadratics are symmetric: M d = 0 wherever d^T M d = 0
            return True
        sym = 0.5 * (F.M + F.M.T)
        basis = null_space(sym, rcond=settings.psd_tol)
        for d in basis.T:
            if np.linalg.norm(F.M @ d) > settings.monotone_plus_tol:
                return False
        return True

    @staticmethod
    def scaled_f(prob: SmpecProblem, eps: float) -> Sum:
        """eps_k f, the part of the step certified against a function"""
        return Sum(((eps, prob.f),))

    @staticmethod
    def _outer_certificate(
        prob: SmpecProblem,
        x_k: Vector,
        lam: float,
        eps: float,
        eta: float,
        y: Vector,
        inner: StepCertificate,
        op: Vector,
    ) -> StepCertificate:
        """Re-read an inner prox certificate as an operator step certificate.

        op is the operator part of the inner identity; it matches F(y) within the
        certificate slack, so the inner normal witness closes the outer identity.
        """
        # inner pieces: the operator Quadratic first, then the atoms of f
        f_atoms = flatten(prob.f)
        f_pieces = list(inner.sub_pieces[1:])
        s_f = sum((w * p for (w, _), p in zip(f_atoms, f_pieces)), np.zeros_like(y))
        sub_witness = op + eps * s_f
        eta1 = eps_subgrad_residual(SmpecSolver.scaled_f(prob, eps), y, eps * s_f, f_pieces)
        return StepCertificate(
            eta1=eta1,
            eta2=inner.eta2,
            eta_budget=eta,
            sub_witness=sub_witness,
            normal_witness=inner.normal_witness,
            residual_norm=float(np.linalg.norm((y - x_k) / lam + sub_witness + inner.normal_witness)),
            sub_pieces=tuple(f_pieces),
            normal_pieces=inner.normal_pieces,
            operator_value=op,
            inner_iterations=inner.inner_iterations,
        )

    @staticmethod
    def smpec_step(
        prob: SmpecProblem, x_k: Vector, k: int, s: Schedule, eta: Optional[float] = None
    ) -> Tuple[Vector, StepCertificate]:
        """-(x_{k+1} - x_k)/lam_k in F(x_{k+1}) + eps_k d_{eta1} f + N_C^{eta2}, certified"""
        eps, lam = s.eps(k), s.lam(k)
        eta = s.eta(k) if eta is None else eta
        M, q = affine_form(prob.F)
        M_sym = 0.5 * (M + M.T)
        M_skew = 0.5 * (M - M.T)
        psi = Sum(((1.0, Quadratic(Q=M_sym, c=q, r=0.0)), (eps, prob.f)))
        L = float(np.linalg.norm(M_skew, 2))
        norm_sym = float(np.linalg.norm(M_sym, 2))
        slack = settings.certificate_slack
        # the Quadratic piece is a gradient at the primal iterate; keep it within slack of F(y)
        exact_tol = 0.25 * slack / norm_sym if norm_sym > 0 else None

        def close(op: Vector, y: Vector, share: float) -> bool:
            Fy = M @ y + q
            return bool(np.linalg.norm(op - Fy) <= share * slack * max(1.0, np.linalg.norm(Fy)))

        if L <= settings.symmetry_tol:
            # symmetric operator: the whole step is one prox solve
            sub = ProxSubproblem(psi=psi, anchor=x_k, lam=lam, C=prob.C, eta_budget=eta)
            y, inner = InnerSolver.solve_prox(sub, exact_tol=exact_tol)
            op = np.asarray(inner.sub_pieces[0])
            if not close(op, y, 0.5):
                raise InnerSolverError("operator value drifted from F(y)", float(np.linalg.norm(op - M @ y - q)))
            return y, SmpecSolver._outer_certificate(prob, x_k, lam, eps, eta, y, inner, op)

        if lam * L > settings.max_skew_condition:
            raise StepSizeError(
                f"lambda * ||skew(M)|| = {lam * L:.3e} exceeds {settings.max_skew_condition:.1e}; use a smaller lambda"
            )
        # forward step on the skew part, backward step on the rest (modulus 1/lam)
        mu = 1.0 / lam
        gamma = mu / L**2
        lam_b = 1.0 / (1.0 / lam + 1.0 / gamma)
        rho = 1.0 / np.sqrt(1.0 + (mu / L) ** 2)
        # backward solves must be accurate well below the gap between successive iterates
        exact_tol = max(0.05 * slack * gamma * (1.0 - rho), 1e-14)
        y = x_k.copy()
        best = float("inf")
        for j in range(settings.splitting_max_iter):
            u = y - gamma * (M_skew @ y)
            anchor = lam_b * (x_k / lam + u / gamma)
            sub = ProxSubproblem(psi=psi, anchor=anchor, lam=lam_b, C=prob.C, eta_budget=eta)
            y_new, inner = InnerSolver.solve_prox(sub, warm_start=y, exact_tol=exact_tol)
            # -(y - x_k)/lam = p_Q + M_skew y_j + (y - y_j)/gamma + eps s_f + xi
            op = np.asarray(inner.sub_pieces[0]) + M_skew @ y + (y_new - y) / gamma
            best = min(best, float(np.linalg.norm(op - M @ y_new - q)))
            if close(op, y_new, 0.5):
                logger.debug(f"splitting step certified after {j + 1} backward solves")
                return y_new, SmpecSolver._outer_certificate(prob, x_k, lam, eps, eta, y_new, inner, op)
            y = y_new
        raise InnerSolverError(f"splitting step not certified within {settings.splitting_max_iter} iterations", best)

    @staticmethod
    def verify_step(prob: SmpecProblem, record: TraceRecord, y: Vector) -> bool:
        if record.cert is None:
            return False
        psi = SmpecSolver.scaled_f(prob, record.eps)
        return InnerSolver.verify_certificate(psi, prob.C, record.x, record.lam, y, record.cert, operator=prob.F)

    @staticmethod
    def smpec_run(
        prob: SmpecProblem,
        s: Schedule,
        max_iter: Optional[int] = None,
        ref: Optional[Sequence] = None,
        eps0: Optional[float] = None,
    ) -> Trace:
        if not SbpSolver.validate_schedule(s):
            raise ScheduleError(f"schedule violates the decay hypotheses: {s.model_dump()}")
        if not SmpecSolver.check_monotone_plus(prob.F):
            raise NotMonotonePlusError()
        max_iter = settings.max_iter if max_iter is None else max_iter
        compact = is_compact(prob.C)
        trace = Trace(kind="smpec")
        x = prob.x0.copy()
        logger.info(f"SMPEC run started: dim={prob.dim}, max_iter={max_iter}")

        gap_ok = compact

        def gap_at(point: Vector) -> Optional[float]:
            # g_D is a diagnostic column; the steps never need it
            nonlocal gap_ok
            if not gap_ok:
                return None
            try:
                return dual_gap(prob.F, prob.C, point).value
            except UnsupportedOperationError as e:
                logger.warning(f"g_D column left empty: {e.detail}")
                gap_ok = False
            except GapEvaluationError as e:
                logger.warning(f"g_D not evaluated at this iterate: {e.detail}")
            return None

        for k in range(max_iter):
            record = TraceRecord(
                k=k,
                x=x,
                f_value=eval_fn(prob.f, x),
                g_value=None,
                eps=s.eps(k),
                lam=s.lam(k),
                eta=s.eta(k),
                dist_to_ref=reference_distance(x, ref),
            )
            record.g_value = gap_at(x)
            try:
                x_next, cert = SmpecSolver.smpec_step(prob, x, k, s)
                stop = eps0 is not None and step_stop_check(x, x_next, record.lam, record.eps, eps0)
                if stop:
                    x_next, cert = SmpecSolver._refine(prob, x, k, s, x_next, cert)
                    stop = step_stop_check(x, x_next, record.lam, record.eps, eps0)
            except BilevelError as e:
                logger.error(f"SMPEC run aborted at k={k}: {e.detail}")
                trace.records.append(record)
                trace.stop_reason = "solver_failure"
                trace.failure = e.detail
                return trace

            record.step_norm = float(np.linalg.norm(x_next - x))
            record.cert = cert
            record.stop_flag = stop
            trace.records.append(record)
            logger.debug(f"k={k} f={record.f_value:.6e} step={record.step_norm:.3e}")
            x = x_next
            if stop:
                trace.stop_reason = "stopping_criterion"
                break

        trace.records.append(
            TraceRecord(
                k=len(trace.records),
                x=x,
                f_value=eval_fn(prob.f, x),
                g_value=gap_at(x),
                dist_to_ref=reference_distance(x, ref),
            )
        )
        logger.info(f"SMPEC run finished after {trace.iterations} iterations ({trace.stop_reason})")
        return trace

    @staticmethod
    def _refine(prob, x, k, s, x_next, cert):
        try:
            return SmpecSolver.smpec_step(prob, x, k, s, eta=min(settings.witness_eta, s.eta(k)))
        except BilevelError as e:
            logger.warning(f"could not tighten the stopping step at k={k}: {e.detail}")
            return x_next, cert
