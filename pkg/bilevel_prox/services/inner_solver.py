# bilevel_prox/services/inner_solver.py
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..config import settings
from ..exceptions import BilevelError, InnerSolverError
from ..models.certificates import ProxSubproblem, StepCertificate
from ..models.functions import Affine, ConvexFunction, MaxAffine, Quadratic, Sum, Vector
from ..models.operators import MonotoneOperator, affine_form
from ..models.sets import ConvexSet, Intersection
from .convex_core import (
    eps_normal_residual,
    eps_subgrad_residual,
    eval_fn,
    flatten,
    member_distance,
    project,
    project_simplex,
    project_with_normals,
    subgradient,
)

logger = logging.getLogger(__name__)

# Composite oracle: x -> (value, subgradient)
CompositeOracle = Callable[[Vector], Tuple[float, Vector]]


class _DualBlock:
    """Dual variable of one weighted non-smooth atom"""

    def __init__(self, index: int, weight: float, atom, anchor: Vector):
        self.index = index
        self.weight = weight
        self.atom = atom
        if isinstance(atom, MaxAffine):
            self.value = np.zeros(atom.A.shape[0])
            self.value[int(np.argmax(atom.A @ anchor + atom.b))] = 1.0
            self.norm_K = atom.norm_A
        else:
            self.value = subgradient(atom, anchor)
            self.norm_K = 1.0

    def piece(self, value: Vector) -> Vector:
        """Unit-weight subgradient candidate held by this block"""
        if isinstance(self.atom, MaxAffine):
            return self.atom.A.T @ value
        return value

    def gradient(self, z: Vector) -> Vector:
        if isinstance(self.atom, MaxAffine):
            return self.weight * (self.atom.A @ z + self.atom.b)
        return self.weight * (z - self.atom.center)

    def project(self, value: Vector) -> Vector:
        if isinstance(self.atom, MaxAffine):
            return project_simplex(value, 1.0)
        n = np.linalg.norm(value)
        radius = self.atom.weight
        return value if n <= radius else value * (radius / n)

    def cheap_residual(self, y: Vector, value: Vector) -> float:
        # complementary slackness gap; an upper bound on the conjugate residual
        if isinstance(self.atom, MaxAffine):
            vals = self.atom.A @ y + self.atom.b
            return max(float(vals.max() - value @ vals), 0.0)
        return eps_subgrad_residual(self.atom, y, value)


class InnerSolver:
    @staticmethod
    def solve_prox(
        p: ProxSubproblem, warm_start: Optional[Vector] = None, exact_tol: Optional[float] = None
    ) -> Tuple[Vector, StepCertificate]:
        """Certified eta-minimizer of psi + ||. - anchor||^2 / (2 lam) over C

        With exact_tol the certified point must also lie within exact_tol of the
        primal iterate, so smooth pieces are gradients at the point up to that error.
        """
        psi, C, a, lam = p.psi, p.C, p.anchor, p.lam
        atoms = flatten(psi)
        n = psi.dim

        # smooth atoms merge into 1/2 z^T H z + g_lin^T z
        H = np.zeros((n, n))
        g_lin = np.zeros(n)
        blocks: List[_DualBlock] = []
        for i, (w, atom) in enumerate(atoms):
            if w == 0.0:
                continue
            if isinstance(atom, Quadratic):
                H += w * atom.Q
                g_lin += w * atom.c
            elif isinstance(atom, Affine):
                g_lin += w * atom.a
            else:
                blocks.append(_DualBlock(i, w, atom, a))
        h_lip = float(np.linalg.eigvalsh(H).max(initial=0.0)) if n else 0.0
        alpha = 1.0 / (h_lip + 1.0 / lam)

        def grad_smooth(z: Vector) -> Vector:
            return H @ z + g_lin

        def primal_min(S: Vector, z: Vector) -> Vector:
            # argmin_C 1/2 z^T H z + <g_lin + S, z> + ||z - a||^2 / (2 lam)
            if h_lip == 0.0:
                return project(C, a - lam * (g_lin + S))
            for _ in range(settings.inner_max_iter):
                z_new = project(C, z - alpha * (H @ z + g_lin + S + (z - a) / lam))
                settled = np.linalg.norm(z_new - z) <= settings.primal_tol * max(1.0, np.linalg.norm(z))
                z = z_new
                if settled:
                    break
            return z

        def pieces_at(z: Vector, duals: List[Vector]) -> List[Vector]:
            pieces = [subgradient(atom, z) for _, atom in atoms]
            for blk, d in zip(blocks, duals):
                pieces[blk.index] = blk.piece(d)
            return pieces

        def candidate(z: Vector, duals: List[Vector]):
            pieces = pieces_at(z, duals)
            s = sum((w * q for (w, _), q in zip(atoms, pieces)), np.zeros(n))
            y, normals = project_with_normals(C, a - lam * s)
            normals = [v / lam for v in normals]
            xi = sum(normals, np.zeros(n))
            cheap = 0.0
            by_index = {blk.index: (blk, d) for blk, d in zip(blocks, duals)}
            for i, ((w, atom), q) in enumerate(zip(atoms, pieces)):
                if w == 0.0:
                    continue
                if i in by_index:
                    blk, d = by_index[i]
                    cheap += w * blk.cheap_residual(y, d)
                else:
                    cheap += w * eps_subgrad_residual(atom, y, q)
            eta2 = eps_normal_residual(C, y, xi, normals if isinstance(C, Intersection) else None)
            return y, s, pieces, xi, normals, cheap, eta2

        z = project(C, a if warm_start is None else warm_start)
        duals = [blk.value.copy() for blk in blocks]
        ext = [d.copy() for d in duals]
        t = 1.0
        L_D = lam * sum(blk.weight * blk.norm_K for blk in blocks) ** 2
        # L_D = 0 only when every block has zero slopes; such duals never reach the primal
        dual_step = 1.0 / L_D if L_D > 0 else 1.0
        best = float("inf")
        phi_best = float("inf")
        prox_values: List[float] = []

        for it in range(1, settings.inner_max_iter + 1):
            if blocks:
                S = sum((blk.weight * blk.piece(d) for blk, d in zip(blocks, ext)), np.zeros(n))
                z = primal_min(S, z)
                new = [blk.project(d + dual_step * blk.gradient(z)) for blk, d in zip(blocks, ext)]
                # gradient restart when the ascent direction turns against the momentum
                turn = sum(float((nd - e) @ (nd - od)) for nd, e, od in zip(new, ext, duals))
                if turn < 0:
                    t = 1.0
                    ext = [nd.copy() for nd in new]
                else:
                    t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                    ext = [nd + ((t - 1.0) / t_next) * (nd - od) for nd, od in zip(new, duals)]
                    t = t_next
                duals = new
            else:
                z = project(C, z - alpha * (grad_smooth(z) + (z - a) / lam))
            if not np.all(np.isfinite(z)):
                raise InnerSolverError("non-finite iterate in the proximal subproblem", best)

            y, s, pieces, xi, normals, cheap, eta2 = candidate(z, duals)
            # only candidates that do not raise the prox objective are accepted
            phi = prox_objective(psi, a, lam, y)
            if phi > phi_best + settings.descent_tol * max(1.0, abs(phi_best)):
                continue
            phi_best = min(phi_best, phi)
            prox_values.append(phi)
            best = min(best, cheap + eta2)
            if cheap + eta2 > p.eta_budget:
                continue
            eta1 = eps_subgrad_residual(psi, y, s, pieces if isinstance(psi, Sum) else None)
            best = min(best, eta1 + eta2)
            if exact_tol is not None and np.linalg.norm(y - z) > exact_tol:
                continue
            if eta1 + eta2 <= p.eta_budget:
                residual = float(np.linalg.norm((y - a) / lam + s + xi))
                logger.debug(f"prox solved in {it} iterations (eta1={eta1:.3e}, eta2={eta2:.3e})")
                return y, StepCertificate(
                    eta1=eta1,
                    eta2=eta2,
                    eta_budget=p.eta_budget,
                    sub_witness=s,
                    normal_witness=xi,
                    residual_norm=residual,
                    sub_pieces=tuple(pieces),
                    normal_pieces=tuple(normals),
                    inner_iterations=it,
                    prox_values=tuple(prox_values),
                )

        raise InnerSolverError(f"proximal subproblem not certified within {settings.inner_max_iter} iterations", best)

    @staticmethod
    def verify_certificate(
        psi: ConvexFunction,
        C: ConvexSet,
        anchor: Vector,
        lam: float,
        y: Vector,
        cert: StepCertificate,
        operator: Optional[MonotoneOperator] = None,
    ) -> bool:
        """Re-check every certificate claim from scratch; False on any violation"""
        slack = settings.certificate_slack
        try:
            y = np.asarray(y, dtype=np.float64)
            anchor = np.asarray(anchor, dtype=np.float64)
            if member_distance(C, y) > settings.membership_tol:
                return False
            if cert.eta1 < 0 or cert.eta2 < 0 or cert.eta1 + cert.eta2 > cert.eta_budget:
                return False

            psi_part = np.asarray(cert.sub_witness, dtype=np.float64)
            if operator is not None:
                if cert.operator_value is None:
                    return False
                M, q = affine_form(operator)
                Fy = M @ y + q
                if np.linalg.norm(Fy - cert.operator_value) > slack * max(1.0, np.linalg.norm(Fy)):
                    return False
                psi_part = psi_part - cert.operator_value

            sub_pieces = list(cert.sub_pieces) if isinstance(psi, Sum) else None
            if eps_subgrad_residual(psi, y, psi_part, sub_pieces) > cert.eta1 + slack:
                return False
            normal_pieces = list(cert.normal_pieces) if isinstance(C, Intersection) else None
            if eps_normal_residual(C, y, cert.normal_witness, normal_pieces) > cert.eta2 + slack:
                return False
            identity = (y - anchor) / lam + cert.sub_witness + cert.normal_witness
            return bool(np.linalg.norm(identity) <= slack)
        except BilevelError as e:
            logger.debug(f"certificate rejected: {e.detail}")
            return False

    @staticmethod
    def solve_composite(
        oracle: CompositeOracle,
        C: ConvexSet,
        x0: Vector,
        tol: float,
        max_iter: Optional[int] = None,
    ) -> Tuple[Vector, float, int]:
        """Projected (sub)gradient with backtracking; returns (x, stationarity, iterations)"""
        max_iter = settings.composite_max_iter if max_iter is None else max_iter
        x = project(C, x0)
        fx, gx = oracle(x)
        step = 1.0
        stationarity = float("inf")
        for it in range(1, max_iter + 1):
            while True:
                x_new = project(C, x - step * gx)
                d = x_new - x
                f_new, g_new = oracle(x_new)
                if f_new <= fx + gx @ d + (d @ d) / (2.0 * step) + 1e-12 * max(1.0, abs(fx)) or step < 1e-16:
                    break
                step *= 0.5
            stationarity = float(np.linalg.norm(d) / step)
            x, fx, gx = x_new, f_new, g_new
            if stationarity <= tol:
                return x, stationarity, it
            step *= 2.0
        logger.warning(f"composite solve hit its cap of {max_iter} iterations (stationarity {stationarity:.3e})")
        return x, stationarity, max_iter


def prox_objective(psi: ConvexFunction, anchor: Vector, lam: float, z: Vector) -> float:
    """psi(z) + ||z - anchor||^2 / (2 lam)"""
    d = np.asarray(z) - anchor
    return eval_fn(psi, z) + float(d @ d) / (2.0 * lam)
