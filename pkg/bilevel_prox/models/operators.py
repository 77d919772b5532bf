from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..config import settings
from ..exceptions import DimensionMismatchError, InvalidFunctionError, NotMonotoneError
from .functions import Affine, Matrix, Quadratic, Vector, as_matrix, as_vector


@dataclass(frozen=True, eq=False)
class AffineOp:
    """F(x) = M x + q, monotone when sym(M) is PSD"""

    M: Matrix
    q: Vector

    def __post_init__(self):
        M = as_matrix(self.M, "AffineOp.M")
        q = as_vector(self.q, "AffineOp.q")
        if M.shape != (q.size, q.size):
            raise DimensionMismatchError(f"AffineOp.M has shape {M.shape}, expected ({q.size}, {q.size})")
        eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
        if eigs.min() < -settings.psd_tol:
            raise NotMonotoneError(f"operator not monotone (sym(M) min eigenvalue {eigs.min():.3e})")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return self.q.size


@dataclass(frozen=True, eq=False)
class GradientOp:
    """F = gradient of a differentiable catalog function"""

    phi: Union[Quadratic, Affine]

    def __post_init__(self):
        if not isinstance(self.phi, (Quadratic, Affine)):
            raise InvalidFunctionError("GradientOp needs a Quadratic or Affine function")

    @property
    def dim(self) -> int:
        return self.phi.dim


MonotoneOperator = Union[AffineOp, GradientOp]


def affine_form(F: MonotoneOperator) -> Tuple[Matrix, Vector]:
    """Every catalog operator is affine: return (M, q) with F(x) = M x + q"""
    if isinstance(F, AffineOp):
        return F.M, F.q
    phi = F.phi
    if isinstance(phi, Quadratic):
        return phi.Q, phi.c
    return np.zeros((phi.dim, phi.dim)), phi.a
