# bilevel_prox/services/oracle.py
import logging

import numpy as np

from ..config import settings
from ..exceptions import DimensionMismatchError, InvalidSetError
from ..models.functions import ConvexFunction, Vector
from ..models.grid import GridSpec
from ..models.operators import MonotoneOperator, affine_form
from ..models.sets import ConvexSet
from .convex_core import contains, eval_fn, eval_points

logger = logging.getLogger(__name__)

# entries of one F(X) @ P^T block in grid_sol_vi
_BLOCK_ENTRIES = 2_000_000


def _feasible_points(C: ConvexSet, g: GridSpec) -> np.ndarray:
    if C.dim != g.dim:
        raise DimensionMismatchError(f"grid has dimension {g.dim}, set has {C.dim}")
    P = g.points()
    P = P[contains(C, P, settings.membership_tol)]
    if P.shape[0] == 0:
        raise InvalidSetError("no grid point lies in C; refine the grid")
    return P


def grid_argmin(fn: ConvexFunction, C: ConvexSet, g: GridSpec, band: float = 0.0) -> np.ndarray:
    """Grid points of C whose value is within band of the grid minimum"""
    P = _feasible_points(C, g)
    vals = eval_points(fn, P)
    keep = vals <= vals.min() + band
    logger.debug(f"grid_argmin kept {int(keep.sum())} of {P.shape[0]} points")
    return P[keep]


def grid_sol_vi(F: MonotoneOperator, C: ConvexSet, g: GridSpec, tol: float) -> np.ndarray:
    """Grid points x of C with min over grid y of <F(x), y - x> >= -tol"""
    P = _feasible_points(C, g)
    M, q = affine_form(F)
    keep = np.zeros(P.shape[0], dtype=bool)
    chunk = max(1, _BLOCK_ENTRIES // P.shape[0])
    for start in range(0, P.shape[0], chunk):
        X = P[start : start + chunk]
        FX = X @ M.T + q
        # <F(x), y> minimized over y, minus <F(x), x>
        worst = np.min(FX @ P.T, axis=1) - np.einsum("ij,ij->i", FX, X)
        keep[start : start + chunk] = worst >= -tol
    return P[keep]


def raw_eps_check(f: ConvexFunction, x: Vector, v: Vector, eps: float, g: GridSpec) -> bool:
    """f(y) >= f(x) + <v, y - x> - eps at every grid point y"""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.size != g.dim or v.size != g.dim:
        raise DimensionMismatchError(f"grid has dimension {g.dim}, got point {x.size} and vector {v.size}")
    P = g.points()
    lhs = eval_points(f, P)
    rhs = eval_fn(f, x) + (P - x) @ v - eps
    return bool(np.all(lhs >= rhs - 1e-12))


def grid_nearest(C: ConvexSet, x: Vector, g: GridSpec) -> Vector:
    """Nearest grid point lying in C"""
    P = _feasible_points(C, g)
    return P[int(np.argmin(np.linalg.norm(P - np.asarray(x, dtype=np.float64), axis=1)))]
