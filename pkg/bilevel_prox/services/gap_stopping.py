# bilevel_prox/services/gap_stopping.py
import logging
from typing import Optional, Sequence, Union

import numpy as np

from ..config import settings
from ..exceptions import (
    BilevelError,
    GapEvaluationError,
    NonCompactSetError,
    ScheduleError,
    UncertifiedWitnessError,
)
from ..models.functions import Vector
from ..models.gap import GapEvaluation, LmrWitness
from ..models.operators import MonotoneOperator, affine_form
from ..models.problems import SbpProblem, Schedule, SmpecProblem
from ..models.sets import ConvexSet, Intersection, is_compact
from ..models.trace import Trace, TraceRecord
from .convex_core import (
    check_dim,
    distance,
    eps_normal_residual,
    eps_subgrad_residual,
    eval_fn,
    flatten,
    linear_oracle,
    project,
    project_with_normals,
    subgradient,
)
from .inner_solver import InnerSolver

logger = logging.getLogger(__name__)


# =============================
# Dual gap function
# =============================
def dual_gap(F: MonotoneOperator, C: ConvexSet, x: Vector, tol: Optional[float] = None) -> GapEvaluation:
    """g_D(x) = sup over y in C of <F(y), x - y>, to within tol"""
    if not is_compact(C):
        raise NonCompactSetError("dual gap needs a compact set")
    tol = settings.gap_tol if tol is None else tol
    x = check_dim(C.dim, x)
    M, q = affine_form(F)
    M_sym = M + M.T

    def value(y: Vector) -> float:
        return float((M @ y + q) @ (x - y))

    def grad(y: Vector) -> Vector:
        return M.T @ (x - y) - (M @ y + q)

    # skew (or zero) M: the objective is linear in y and one oracle call is exact
    if np.max(np.abs(M_sym), initial=0.0) <= settings.symmetry_tol:
        y = linear_oracle(C, M.T @ x - q)
        return GapEvaluation(value=value(y), maximizer=y, tol=tol)

    L = float(np.linalg.norm(M_sym, 2))
    y = project(C, x)
    fy = value(y)
    for it in range(1, settings.gap_max_iter + 1):
        g = grad(y)
        s = linear_oracle(C, g)
        fw_gap = float(g @ (s - y))
        if fw_gap <= tol:
            return GapEvaluation(value=fy, maximizer=y, tol=tol, fw_gap=max(fw_gap, 0.0), iterations=it)

        # Frank-Wolfe step with exact line search on the concave quadratic
        d = s - y
        curv = float(d @ M @ d)
        t = 1.0 if curv <= 0 else min(1.0, float(g @ d) / (2.0 * curv))
        y_fw = y + t * d
        f_fw = value(y_fw)
        # projected gradient step with step 1/||M + M^T||
        y_pg = project(C, y + g / L)
        f_pg = value(y_pg)
        y, fy = (y_pg, f_pg) if f_pg > f_fw else (y_fw, f_fw)

    raise GapEvaluationError(f"dual gap ascent stalled after {settings.gap_max_iter} iterations")


def _danskin_element(F: MonotoneOperator, C: ConvexSet, x: Vector, tol: float, check: bool):
    x = check_dim(C.dim, x)
    ev = dual_gap(F, C, x, tol)
    M, q = affine_form(F)
    w = M @ ev.maximizer + q
    if check:
        rng = np.random.default_rng(0)
        for _ in range(settings.gap_check_samples):
            z = project(C, x + rng.standard_normal(x.size))
            if dual_gap(F, C, z, tol).value < ev.value + w @ (z - x) - 3.0 * tol:
                raise GapEvaluationError("Danskin element fails the subgradient inequality")
    return w, ev


def gap_subgradient(
    F: MonotoneOperator, C: ConvexSet, x: Vector, tol: Optional[float] = None, check: bool = True
) -> Vector:
    """Danskin element F(y*) of the subdifferential of g_D at x"""
    tol = settings.gap_tol if tol is None else tol
    return _danskin_element(F, C, x, tol, check)[0]


def r_smpec_feasible(F: MonotoneOperator, C: ConvexSet, x: Vector, tol: float) -> bool:
    if distance(C, x) > tol:
        return False
    return dual_gap(F, C, x, tol).value <= tol


# =============================
# Penalty path
# =============================
def _penalized_oracle(prob: SmpecProblem, mu: float, gap_tol: float, anchor=None, lam=None):
    def oracle(x):
        ev = dual_gap(prob.F, prob.C, x, gap_tol)
        M, q = affine_form(prob.F)
        val = eval_fn(prob.f, x) + mu * ev.value
        sub = subgradient(prob.f, x) + mu * (M @ ev.maximizer + q)
        if anchor is not None:
            d = x - anchor
            val += float(d @ d) / (2.0 * lam)
            sub = sub + d / lam
        return val, sub

    return oracle


def penalty_solve(
    prob: SmpecProblem,
    mu_schedule: Sequence[float],
    inner_tol: float = 1e-6,
    x_tilde: Optional[Vector] = None,
    ref: Optional[Sequence] = None,
) -> Trace:
    """Minimize f + mu_k g_D over C for an increasing penalty sequence"""
    from .sbp_solver import reference_distance

    if not is_compact(prob.C):
        raise NonCompactSetError("penalty path needs a compact set")
    mus = [float(m) for m in mu_schedule]
    if not mus or any(m <= 0 for m in mus) or any(b < a for a, b in zip(mus, mus[1:])):
        raise ScheduleError("penalty parameters must be positive and non-decreasing")

    trace = Trace(kind="penalty")
    f_tilde = None if x_tilde is None else eval_fn(prob.f, x_tilde)
    x = prob.x0.copy()
    for k, mu in enumerate(mus):
        gap_tol = min(settings.gap_tol, inner_tol / mu)
        try:
            x_new, stationarity, its = InnerSolver.solve_composite(
                _penalized_oracle(prob, mu, gap_tol), prob.C, x, inner_tol
            )
            gap = dual_gap(prob.F, prob.C, x_new, gap_tol).value
        except BilevelError as e:
            logger.error(f"penalty path aborted at mu={mu:.3e}: {e.detail}")
            if not trace.records:
                trace.records.append(
                    TraceRecord(k=0, x=x, f_value=eval_fn(prob.f, x), g_value=None, dist_to_ref=reference_distance(x, ref))
                )
            trace.stop_reason = "solver_failure"
            trace.failure = e.detail
            return trace
        f_val = eval_fn(prob.f, x_new)
        bound_ok = None
        if f_tilde is not None:
            bound_ok = bool(gap <= (f_tilde - f_val + inner_tol) / mu + gap_tol)
        trace.records.append(
            TraceRecord(
                k=k,
                x=x_new,
                f_value=f_val,
                g_value=gap,
                eps=1.0 / mu,
                step_norm=float(np.linalg.norm(x_new - x)),
                dist_to_ref=reference_distance(x_new, ref),
                bound_ok=bound_ok,
            )
        )
        logger.debug(f"mu={mu:.3e}: f={f_val:.6e} gap={gap:.3e} in {its} iterations")
        x = x_new
    logger.info(f"penalty path finished after {len(mus)} penalty values")
    return trace


# =============================
# Stopping criterion
# =============================
def step_stop_check(x_k: Vector, x_k1: Vector, lambda_k: float, eps_k: float, eps0: float) -> bool:
    """||x_{k+1} - x_k|| <= lambda_k eps_k eps0"""
    return bool(np.linalg.norm(np.asarray(x_k1) - np.asarray(x_k)) <= lambda_k * eps_k * eps0)


def eps_lmr_check(w: LmrWitness, eps0: float, tol: Optional[float] = None) -> bool:
    tol = settings.membership_tol if tol is None else tol
    for name, r in (("u", w.u_residual), ("w", w.w_residual), ("v", w.v_residual)):
        if not r <= tol:
            raise UncertifiedWitnessError(f"witness {name} is certified only to {r:.3e}")
    if w.lambda_mult < 0:
        raise UncertifiedWitnessError("multiplier must be non-negative")
    return bool(np.linalg.norm(w.u + w.lambda_mult * w.w + w.v) <= eps0)


def _weighted(atoms, pieces) -> Vector:
    return sum((wt * p for (wt, _), p in zip(atoms, pieces)), np.zeros_like(pieces[0]))


def assemble_lmr_witness(
    record: TraceRecord, x_next: Vector, problem: Union[SbpProblem, SmpecProblem]
) -> LmrWitness:
    """Multiplier-rule witness at x_{k+1} read off a certified step record"""
    cert, eps = record.cert, record.eps
    if cert is None:
        raise UncertifiedWitnessError(f"record {record.k} carries no certificate")
    x_next = np.asarray(x_next, dtype=np.float64)
    f_atoms = flatten(problem.f)
    pieces = list(cert.sub_pieces)

    if isinstance(problem, SbpProblem):
        g_atoms = flatten(problem.g)
        g_pieces, f_pieces = pieces[: len(g_atoms)], pieces[len(g_atoms):]
        w = _weighted(g_atoms, g_pieces)
        w_residual = sum(wt * eps_subgrad_residual(a, x_next, p) for (wt, a), p in zip(g_atoms, g_pieces) if wt != 0.0)
    else:
        f_pieces = pieces
        # operator value at x_{k+1}; no membership in the gap subdifferential is claimed
        M, q = affine_form(problem.F)
        w = np.asarray(cert.operator_value, dtype=np.float64)
        w_residual = float(np.linalg.norm(w - (M @ x_next + q)))

    u = _weighted(f_atoms, f_pieces)
    u_residual = sum(wt * eps_subgrad_residual(a, x_next, p) for (wt, a), p in zip(f_atoms, f_pieces) if wt != 0.0)
    v = np.asarray(cert.normal_witness) / eps
    normal_pieces = [np.asarray(p) / eps for p in cert.normal_pieces]
    v_residual = eps_normal_residual(problem.C, x_next, v, normal_pieces if isinstance(problem.C, Intersection) else None)
    return LmrWitness(
        u=u,
        w=w,
        v=v,
        lambda_mult=1.0 / eps,
        u_residual=float(u_residual),
        w_residual=float(w_residual),
        v_residual=float(v_residual),
    )


def gap_path_witness(
    record: TraceRecord, x_next: Vector, problem: SmpecProblem, tol: Optional[float] = None
) -> LmrWitness:
    """Multiplier-rule witness at x_{k+1} for the penalty and gap proximal paths.

    u is a subgradient of f, w the Danskin element of g_D and v the normal part of
    a projected step along -(u + w / eps_k), short enough to be certified to tol.
    """
    if record.eps is None:
        raise UncertifiedWitnessError(f"record {record.k} carries no penalty parameter")
    tol = settings.membership_tol if tol is None else tol
    x_next = check_dim(problem.dim, x_next)
    lam = 1.0 / record.eps

    f_atoms = flatten(problem.f)
    f_pieces = [subgradient(a, x_next) for _, a in f_atoms]
    u = _weighted(f_atoms, f_pieces)
    u_residual = sum(wt * eps_subgrad_residual(a, x_next, p) for (wt, a), p in zip(f_atoms, f_pieces) if wt != 0.0)
    # an approximate maximizer y* makes F(y*) a fw_gap-subgradient of g_D
    w, ev = _danskin_element(problem.F, problem.C, x_next, tol, check=True)

    g = u + lam * w
    t = 0.5 * tol / max(1.0, float(g @ g))
    _, normals = project_with_normals(problem.C, x_next - t * g)
    normal_pieces = [p / t for p in normals]
    v = sum(normal_pieces, np.zeros_like(x_next))
    v_residual = eps_normal_residual(
        problem.C, x_next, v, normal_pieces if isinstance(problem.C, Intersection) else None
    )
    return LmrWitness(
        u=u,
        w=w,
        v=v,
        lambda_mult=lam,
        u_residual=float(u_residual),
        w_residual=float(ev.fw_gap),
        v_residual=float(v_residual),
    )


def _certified_stop(record: TraceRecord, x_next: Vector, problem: SmpecProblem, eps0: float) -> bool:
    try:
        return eps_lmr_check(gap_path_witness(record, x_next, problem), eps0)
    except BilevelError as e:
        logger.warning(f"step test fired at k={record.k} without a certified witness: {e.detail}")
        return False


# =============================
# Proximal path on g_D + eps_k f
# =============================
def gap_prox_run(
    prob: SmpecProblem,
    s: Schedule,
    max_iter: Optional[int] = None,
    ref: Optional[Sequence] = None,
    eps0: Optional[float] = None,
    inner_tol: float = 1e-8,
) -> Trace:
    """x_{k+1} ~ argmin_C g_D + eps_k f + ||. - x_k||^2 / (2 lam_k), solved by oracle calls"""
    from .sbp_solver import SbpSolver, reference_distance

    if not is_compact(prob.C):
        raise NonCompactSetError("the gap proximal path needs a compact set")
    if not SbpSolver.validate_schedule(s):
        raise ScheduleError(f"schedule violates the decay hypotheses: {s.model_dump()}")
    max_iter = settings.max_iter if max_iter is None else max_iter
    trace = Trace(kind="gap_prox")
    x = prob.x0.copy()

    for k in range(max_iter):
        eps, lam = s.eps(k), s.lam(k)
        gap_tol = min(settings.gap_tol, inner_tol)
        record = TraceRecord(
            k=k,
            x=x,
            f_value=eval_fn(prob.f, x),
            g_value=None,
            eps=eps,
            lam=lam,
            eta=s.eta(k),
            dist_to_ref=reference_distance(x, ref),
        )
        try:
            record.g_value = dual_gap(prob.F, prob.C, x, gap_tol).value
            # phi_k scaled by 1/eps_k: f + (1/eps_k) g_D with prox parameter lam_k eps_k
            oracle = _penalized_oracle(prob, 1.0 / eps, gap_tol, anchor=x, lam=lam * eps)
            x_next, stationarity, _ = InnerSolver.solve_composite(oracle, prob.C, x, inner_tol)
        except BilevelError as e:
            logger.error(f"gap proximal path aborted at k={k}: {e.detail}")
            trace.records.append(record)
            trace.stop_reason = "solver_failure"
            trace.failure = e.detail
            return trace
        record.step_norm = float(np.linalg.norm(x_next - x))
        # the step test only stops the path once a witness backs it
        stop = eps0 is not None and step_stop_check(x, x_next, lam, eps, eps0)
        record.stop_flag = stop and _certified_stop(record, x_next, prob, eps0)
        trace.records.append(record)
        x = x_next
        if record.stop_flag:
            trace.stop_reason = "stopping_criterion"
            break

    trace.records.append(
        TraceRecord(
            k=len(trace.records),
            x=x,
            f_value=eval_fn(prob.f, x),
            g_value=dual_gap(prob.F, prob.C, x).value,
            dist_to_ref=reference_distance(x, ref),
        )
    )
    logger.info(f"gap proximal path finished after {trace.iterations} iterations ({trace.stop_reason})")
    return trace
