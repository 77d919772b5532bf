from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from numpy.typing import NDArray

from ..config import settings
from ..exceptions import DimensionMismatchError, InvalidFunctionError

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]


def as_vector(x, name: str = "vector") -> Vector:
    """Copy to a frozen 1-d float array, rejecting non-finite entries"""
    arr = np.array(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidFunctionError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


def as_matrix(m, name: str = "matrix") -> Matrix:
    arr = np.array(m, dtype=np.float64)
    if arr.ndim < 2 and arr.size == 1:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidFunctionError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InvalidFunctionError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Affine:
    """<a, x> + b"""

    a: Vector
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", as_vector(self.a, "Affine.a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size


@dataclass(frozen=True, eq=False)
class Quadratic:
    """1/2 x^T Q x + c^T x + r with Q symmetric PSD"""

    Q: Matrix
    c: Vector
    r: float = 0.0
    # pseudo-inverse and range projector, cached for conjugate evaluations
    Q_pinv: Matrix = field(init=False, repr=False, compare=False)
    range_proj: Matrix = field(init=False, repr=False, compare=False)
    max_eig: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = as_matrix(self.Q, "Quadratic.Q")
        c = as_vector(self.c, "Quadratic.c")
        if Q.shape != (c.size, c.size):
            raise DimensionMismatchError(f"Quadratic.Q has shape {Q.shape}, expected ({c.size}, {c.size})")
        if np.max(np.abs(Q - Q.T), initial=0.0) > settings.symmetry_tol:
            raise InvalidFunctionError("Quadratic.Q is not symmetric")
        eigs = np.linalg.eigvalsh(Q)
        if eigs.size and eigs.min() < -settings.psd_tol:
            raise InvalidFunctionError(f"Quadratic.Q is not PSD (min eigenvalue {eigs.min():.3e})")
        pinv = np.linalg.pinv(Q, rcond=1e-12, hermitian=True)
        proj = Q @ pinv
        pinv.flags.writeable = False
        proj.flags.writeable = False
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "Q_pinv", pinv)
        object.__setattr__(self, "range_proj", proj)
        object.__setattr__(self, "max_eig", float(max(eigs.max(initial=0.0), 0.0)))

    @property
    def dim(self) -> int:
        return self.c.size


@dataclass(frozen=True, eq=False)
class Norm2:
    """weight * ||x - center||"""

    center: Vector
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "Norm2.center"))
        if not self.weight >= 0:
            raise InvalidFunctionError("Norm2.weight must be non-negative")
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def dim(self) -> int:
        return self.center.size


@dataclass(frozen=True, eq=False)
class MaxAffine:
    """max_i <a_i, x> + b_i; rows of A are the a_i"""

    A: Matrix
    b: Vector
    norm_A: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        A = as_matrix(A, "MaxAffine.A")
        b = as_vector(self.b, "MaxAffine.b")
        if A.shape[0] == 0:
            raise InvalidFunctionError("MaxAffine needs at least one piece")
        if A.shape[0] != b.size:
            raise DimensionMismatchError(f"MaxAffine has {A.shape[0]} slopes but {b.size} offsets")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "norm_A", float(np.linalg.norm(A, 2)))

    @classmethod
    def from_pieces(cls, pieces) -> "MaxAffine":
        """Build from a list of (a_i, b_i) pairs"""
        pieces = list(pieces)
        if not pieces:
            raise InvalidFunctionError("MaxAffine needs at least one piece")
        A = np.array([np.atleast_1d(np.asarray(a, dtype=np.float64)) for a, _ in pieces])
        b = np.array([float(bi) for _, bi in pieces])
        return cls(A=A, b=b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class Sum:
    """sum_i weight_i * f_i with non-negative weights"""

    terms: Tuple[Tuple[float, "ConvexFunction"], ...]

    def __post_init__(self):
        terms = tuple((float(w), fn) for w, fn in self.terms)
        if not terms:
            raise InvalidFunctionError("Sum needs at least one term")
        for w, _ in terms:
            if not (w >= 0 and np.isfinite(w)):
                raise InvalidFunctionError(f"Sum weight {w} must be finite and non-negative")
        dims = {fn.dim for _, fn in terms}
        if len(dims) != 1:
            raise DimensionMismatchError(f"Sum terms have different dimensions {sorted(dims)}")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim


ConvexFunction = Union[Affine, Quadratic, Norm2, MaxAffine, Sum]
Atom = Union[Affine, Quadratic, Norm2, MaxAffine]
