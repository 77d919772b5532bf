# bilevel_prox/services/convex_core.py
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from ..config import settings
from ..exceptions import (
    CertificateError,
    DimensionMismatchError,
    InfeasiblePointError,
    InvalidSetError,
    NonCompactSetError,
    ProjectionError,
    UnsupportedOperationError,
)
from ..models.functions import Affine, Atom, ConvexFunction, MaxAffine, Norm2, Quadratic, Sum, Vector
from ..models.sets import Ball, Box, ConvexSet, Halfspace, Intersection, Simplex, is_compact, is_polyhedral

logger = logging.getLogger(__name__)

INF = float("inf")

# HiGHS defaults (1e-7) are too loose for certificate residuals
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def check_dim(expected: int, x: Vector, what: str = "point") -> Vector:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != expected:
        raise DimensionMismatchError(f"{what} has dimension {x.size}, expected {expected}")
    return x


# =============================
# Functions
# =============================
def flatten(f: ConvexFunction) -> List[Tuple[float, Atom]]:
    """Multiply out nested Sum weights; the order indexes decompositions"""
    if not isinstance(f, Sum):
        return [(1.0, f)]
    atoms = []
    for w, term in f.terms:
        atoms.extend((w * wi, atom) for wi, atom in flatten(term))
    return atoms


def eval_fn(f: ConvexFunction, x: Vector) -> float:
    x = check_dim(f.dim, x)
    if isinstance(f, Affine):
        return float(f.a @ x + f.b)
    if isinstance(f, Quadratic):
        return float(0.5 * x @ f.Q @ x + f.c @ x + f.r)
    if isinstance(f, Norm2):
        return float(f.weight * np.linalg.norm(x - f.center))
    if isinstance(f, MaxAffine):
        return float(np.max(f.A @ x + f.b))
    return float(sum(w * eval_fn(term, x) for w, term in f.terms if w != 0.0))


def eval_points(f: ConvexFunction, P: np.ndarray) -> np.ndarray:
    """f at every row of P"""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if P.shape[1] != f.dim:
        raise DimensionMismatchError(f"points have dimension {P.shape[1]}, expected {f.dim}")
    if isinstance(f, Affine):
        return P @ f.a + f.b
    if isinstance(f, Quadratic):
        return 0.5 * np.einsum("ij,jk,ik->i", P, f.Q, P) + P @ f.c + f.r
    if isinstance(f, Norm2):
        return f.weight * np.linalg.norm(P - f.center, axis=1)
    if isinstance(f, MaxAffine):
        return np.max(P @ f.A.T + f.b, axis=1)
    out = np.zeros(P.shape[0])
    for w, term in f.terms:
        if w != 0.0:
            out += w * eval_points(term, P)
    return out


def subgradient(f: ConvexFunction, x: Vector) -> Vector:
    """Deterministic element of the subdifferential"""
    x = check_dim(f.dim, x)
    if isinstance(f, Affine):
        return f.a.copy()
    if isinstance(f, Quadratic):
        return f.Q @ x + f.c
    if isinstance(f, Norm2):
        d = x - f.center
        n = np.linalg.norm(d)
        if n == 0.0:
            return np.zeros_like(x)
        return f.weight * d / n
    if isinstance(f, MaxAffine):
        # np.argmax returns the first maximum: lowest-index active piece
        return f.A[int(np.argmax(f.A @ x + f.b))].copy()
    out = np.zeros_like(x)
    for w, term in f.terms:
        if w != 0.0:
            out += w * subgradient(term, x)
    return out


def conjugate(f: Atom, v: Vector) -> float:
    """f*(v) = sup_x <v, x> - f(x), +inf outside dom f*"""
    if isinstance(f, Sum):
        raise UnsupportedOperationError("conjugate of a Sum is not computed; certify the pieces separately")
    v = check_dim(f.dim, v, "dual vector")
    tol = settings.conjugate_tol
    if isinstance(f, Affine):
        return -f.b if np.max(np.abs(v - f.a), initial=0.0) <= tol else INF
    if isinstance(f, Quadratic):
        d = v - f.c
        if np.linalg.norm(d - f.range_proj @ d) > tol * max(1.0, np.linalg.norm(d)):
            return INF
        return float(0.5 * d @ f.Q_pinv @ d - f.r)
    if isinstance(f, Norm2):
        return float(v @ f.center) if np.linalg.norm(v) <= f.weight + tol else INF
    # MaxAffine: min -b.lam  s.t.  A^T lam = v, sum(lam) = 1, lam >= 0
    m = f.A.shape[0]
    A_eq = np.vstack([f.A.T, np.ones((1, m))])
    b_eq = np.concatenate([v, [1.0]])
    res = linprog(c=-f.b, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=_LP_OPTIONS)
    if res.status != 0:
        return INF
    return float(res.fun)


def eps_subgrad_residual(f: ConvexFunction, x: Vector, v: Vector, pieces: Optional[Sequence[Vector]] = None) -> float:
    """Smallest eps with v in the eps-subdifferential of f at x (upper bound for sums)"""
    x = check_dim(f.dim, x)
    v = check_dim(f.dim, v, "dual vector")
    if not isinstance(f, Sum):
        r = eval_fn(f, x) + conjugate(f, v) - v @ x
        return max(float(r), 0.0)

    atoms = flatten(f)
    if pieces is None:
        raise CertificateError("a Sum residual needs one dual piece per term")
    if len(pieces) != len(atoms):
        raise CertificateError(f"got {len(pieces)} dual pieces for {len(atoms)} terms")
    pieces = [check_dim(f.dim, p, "dual piece") for p in pieces]
    combined = sum((w * p for (w, _), p in zip(atoms, pieces)), np.zeros_like(v))
    if np.linalg.norm(combined - v) > settings.certificate_slack * max(1.0, np.linalg.norm(v)):
        raise CertificateError("dual pieces do not add up to the tested vector")

    total = 0.0
    for (w, atom), p in zip(atoms, pieces):
        if w == 0.0:
            continue
        total += w * eps_subgrad_residual(atom, x, p)
    return total


def recession_slope(f: ConvexFunction, d: Vector) -> float:
    """f_inf(d), the asymptotic slope of f along the direction d"""
    d = check_dim(f.dim, d, "direction")
    if isinstance(f, Affine):
        return float(f.a @ d)
    if isinstance(f, Quadratic):
        if np.linalg.norm(f.range_proj @ d) > settings.conjugate_tol * max(1.0, np.linalg.norm(d)):
            return INF
        return float(f.c @ d)
    if isinstance(f, Norm2):
        return float(f.weight * np.linalg.norm(d))
    if isinstance(f, MaxAffine):
        return float(np.max(f.A @ d))
    return float(sum(w * recession_slope(term, d) for w, term in f.terms if w != 0.0))


# =============================
# Sets
# =============================
def project_simplex(x: Vector, scale: float) -> Vector:
    # sort-and-threshold onto {y >= 0, sum(y) = scale}
    if not np.all(np.isfinite(x)):
        raise ProjectionError("cannot project a non-finite point onto a simplex")
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - scale
    ind = np.arange(1, x.size + 1)
    cond = u - css / ind > 0
    # the first index always qualifies up to round-off
    rho = int(ind[cond][-1]) if cond.any() else 1
    theta = css[rho - 1] / rho
    return np.maximum(x - theta, 0.0)


def _project_simple(C: ConvexSet, x: Vector) -> Vector:
    if isinstance(C, Box):
        return np.clip(x, C.lo, C.hi)
    if isinstance(C, Ball):
        d = x - C.center
        n = np.linalg.norm(d)
        if n <= C.radius:
            return x.copy()
        return C.center + d * (C.radius / n)
    if isinstance(C, Simplex):
        return project_simplex(x, C.scale)
    if isinstance(C, Halfspace):
        viol = C.a @ x - C.b
        if viol <= 0:
            return x.copy()
        return x - (viol / (C.a @ C.a)) * C.a
    raise UnsupportedOperationError(f"no projection for {type(C).__name__}")


def _dykstra(C: Intersection, x: Vector) -> Tuple[Vector, List[Vector]]:
    m = len(C.sets)
    z = x.copy()
    incr = [np.zeros_like(x) for _ in range(m)]
    for sweep in range(settings.dykstra_max_sweeps):
        change = 0.0
        for i, S in enumerate(C.sets):
            y = _project_simple(S, z + incr[i])
            new_incr = z + incr[i] - y
            change += np.sum((new_incr - incr[i]) ** 2) + np.sum((y - z) ** 2)
            incr[i] = new_incr
            z = y
        if np.sqrt(change) <= settings.dykstra_tol:
            logger.debug(f"Dykstra settled after {sweep + 1} sweeps")
            break
    else:
        raise ProjectionError(f"Dykstra did not settle within {settings.dykstra_max_sweeps} sweeps; is the intersection empty?")
    # x - z equals the sum of increments; absorb round-off into the last one
    incr[-1] = incr[-1] + (x - z - sum(incr))
    return z, incr


def project(C: ConvexSet, x: Vector) -> Vector:
    x = check_dim(C.dim, x)
    if isinstance(C, Intersection):
        return _dykstra(C, x)[0]
    return _project_simple(C, x)


def project_with_normals(C: ConvexSet, x: Vector) -> Tuple[Vector, List[Vector]]:
    """P_C(x) and normal pieces summing to x - P_C(x), one per member set"""
    x = check_dim(C.dim, x)
    if isinstance(C, Intersection):
        return _dykstra(C, x)
    y = _project_simple(C, x)
    return y, [x - y]


def sample_points(C: ConvexSet, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic points of C: projections of a standard Gaussian cloud"""
    rng = np.random.default_rng(seed)
    return np.array([project(C, z) for z in rng.standard_normal((count, C.dim))]).reshape(-1, C.dim)


def recession_directions(C: ConvexSet, count: int, seed: int = 0) -> np.ndarray:
    """Unit directions sampled from the recession cone of C; none for compact C"""
    if is_compact(C):
        return np.zeros((0, C.dim))
    # only halfspaces are unbounded, so the cone is {d : <a_i, d> <= 0}
    members = C.sets if isinstance(C, Intersection) else (C,)
    cone = Intersection(tuple(Halfspace(a=S.a, b=0.0) for S in members))
    rng = np.random.default_rng(seed)
    dirs = []
    for z in rng.standard_normal((count, C.dim)):
        d = project(cone, z)
        n = np.linalg.norm(d)
        if n > settings.membership_tol:
            dirs.append(d / n)
    return np.array(dirs).reshape(-1, C.dim)


def distance(C: ConvexSet, x: Vector) -> float:
    x = check_dim(C.dim, x)
    return float(np.linalg.norm(x - project(C, x)))


def member_distance(C: ConvexSet, x: Vector) -> float:
    """Largest distance to a member set; equals distance() for simple sets"""
    if isinstance(C, Intersection):
        return max(distance(S, x) for S in C.sets)
    return distance(C, x)


def contains(C: ConvexSet, P: np.ndarray, tol: float) -> np.ndarray:
    """Boolean mask of the rows of P lying in C up to tol"""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if isinstance(C, Box):
        return np.all((P >= C.lo - tol) & (P <= C.hi + tol), axis=1)
    if isinstance(C, Ball):
        return np.linalg.norm(P - C.center, axis=1) <= C.radius + tol
    if isinstance(C, Simplex):
        return np.all(P >= -tol, axis=1) & (np.abs(P.sum(axis=1) - C.scale) <= tol)
    if isinstance(C, Halfspace):
        return (P @ C.a - C.b) / np.linalg.norm(C.a) <= tol
    mask = np.ones(P.shape[0], dtype=bool)
    for S in C.sets:
        mask &= contains(S, P, tol)
    return mask


def support(C: ConvexSet, v: Vector) -> float:
    """sigma_C(v) = sup over C of <v, x>"""
    v = check_dim(C.dim, v, "direction")
    if isinstance(C, Box):
        return float(np.sum(np.maximum(v * C.lo, v * C.hi)))
    if isinstance(C, Ball):
        return float(C.center @ v + C.radius * np.linalg.norm(v))
    if isinstance(C, Simplex):
        return float(C.scale * np.max(v))
    if isinstance(C, Halfspace):
        # finite only along the outward normal: v = t a, t >= 0
        t = float(v @ C.a / (C.a @ C.a))
        off = np.linalg.norm(v - t * C.a)
        if t < -settings.conjugate_tol or off > settings.conjugate_tol * max(1.0, np.linalg.norm(v)):
            return INF
        return max(t, 0.0) * C.b
    raise UnsupportedOperationError("support function of an Intersection is not computed exactly")


def eps_normal_residual(C: ConvexSet, xbar: Vector, v: Vector, pieces: Optional[Sequence[Vector]] = None) -> float:
    """Smallest eps with v in the eps-normal set of C at xbar (upper bound for intersections)"""
    xbar = check_dim(C.dim, xbar)
    v = check_dim(C.dim, v, "normal vector")
    d = member_distance(C, xbar)
    if d > settings.membership_tol:
        raise InfeasiblePointError(f"point lies outside C (distance {d:.3e})")
    if not isinstance(C, Intersection):
        return max(support(C, v) - float(v @ xbar), 0.0)

    if pieces is None:
        raise CertificateError("an Intersection residual needs one normal piece per member set")
    if len(pieces) != len(C.sets):
        raise CertificateError(f"got {len(pieces)} normal pieces for {len(C.sets)} member sets")
    pieces = [check_dim(C.dim, p, "normal piece") for p in pieces]
    if np.linalg.norm(sum(pieces) - v) > settings.certificate_slack * max(1.0, np.linalg.norm(v)):
        raise CertificateError("normal pieces do not add up to the tested vector")
    return float(sum(max(support(S, p) - float(p @ xbar), 0.0) for S, p in zip(C.sets, pieces)))


def _polyhedral_oracle(C: Intersection, d: Vector) -> Vector:
    n = C.dim
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for S in C.sets:
        if isinstance(S, Box):
            lo, hi = np.maximum(lo, S.lo), np.minimum(hi, S.hi)
        elif isinstance(S, Simplex):
            lo = np.maximum(lo, 0.0)
            A_eq.append(np.ones(n))
            b_eq.append(S.scale)
        else:
            A_ub.append(S.a)
            b_ub.append(S.b)
    res = linprog(
        c=-d,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=[(None if np.isinf(l) else l, None if np.isinf(h) else h) for l, h in zip(lo, hi)],
        method="highs",
        options=_LP_OPTIONS,
    )
    if res.status == 2:
        raise InvalidSetError("intersection is empty")
    if res.status == 3:
        raise NonCompactSetError("linear objective is unbounded over the intersection")
    if res.status != 0:
        raise UnsupportedOperationError(f"linear oracle failed: {res.message}")
    return np.asarray(res.x, dtype=np.float64)


def linear_oracle(C: ConvexSet, d: Vector) -> Vector:
    """A maximizer of <d, y> over C"""
    d = check_dim(C.dim, d, "direction")
    if isinstance(C, Box):
        return np.where(d >= 0, C.hi, C.lo).astype(np.float64)
    if isinstance(C, Ball):
        n = np.linalg.norm(d)
        return C.center.copy() if n == 0.0 else C.center + C.radius * d / n
    if isinstance(C, Simplex):
        y = np.zeros(C.dim)
        y[int(np.argmax(d))] = C.scale
        return y
    if isinstance(C, Halfspace):
        raise NonCompactSetError("a halfspace has no linear oracle")
    if is_polyhedral(C):
        return _polyhedral_oracle(C, d)
    raise UnsupportedOperationError("linear oracle over a non-polyhedral intersection is not supported")
