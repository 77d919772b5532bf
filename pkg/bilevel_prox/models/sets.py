from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..exceptions import DimensionMismatchError, InvalidSetError
from .functions import Vector, as_vector


@dataclass(frozen=True, eq=False)
class Box:
    lo: Vector
    hi: Vector

    def __post_init__(self):
        lo = as_vector(self.lo, "Box.lo")
        hi = as_vector(self.hi, "Box.hi")
        if lo.size != hi.size:
            raise DimensionMismatchError(f"Box bounds have sizes {lo.size} and {hi.size}")
        if np.any(lo > hi):
            raise InvalidSetError("Box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size


@dataclass(frozen=True, eq=False)
class Ball:
    center: Vector
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "Ball.center"))
        if not self.radius > 0:
            raise InvalidSetError("Ball.radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size


@dataclass(frozen=True, eq=False)
class Simplex:
    """{y >= 0 : sum(y) = scale} in dimension dim"""

    dim: int
    scale: float = 1.0

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidSetError("Simplex.dim must be at least 1")
        if not self.scale > 0:
            raise InvalidSetError("Simplex.scale must be positive")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "scale", float(self.scale))


@dataclass(frozen=True, eq=False)
class Halfspace:
    """{x : <a, x> <= b}"""

    a: Vector
    b: float

    def __post_init__(self):
        a = as_vector(self.a, "Halfspace.a")
        if not np.any(a):
            raise InvalidSetError("Halfspace.a must be non-zero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size


@dataclass(frozen=True, eq=False)
class Intersection:
    sets: Tuple["ConvexSet", ...]

    def __post_init__(self):
        sets = []
        for s in self.sets:
            # nested intersections are flattened so every member is a simple set
            sets.extend(s.sets if isinstance(s, Intersection) else (s,))
        sets = tuple(sets)
        if not sets:
            raise InvalidSetError("Intersection needs at least one set")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise DimensionMismatchError(f"Intersection members have different dimensions {sorted(dims)}")
        object.__setattr__(self, "sets", sets)

    @property
    def dim(self) -> int:
        return self.sets[0].dim


ConvexSet = Union[Box, Ball, Simplex, Halfspace, Intersection]

COMPACT_SETS = (Box, Ball, Simplex)
POLYHEDRAL_SETS = (Box, Simplex, Halfspace)


def is_compact(C: ConvexSet) -> bool:
    if isinstance(C, Intersection):
        return any(is_compact(s) for s in C.sets)
    return isinstance(C, COMPACT_SETS)


def is_polyhedral(C: ConvexSet) -> bool:
    if isinstance(C, Intersection):
        return all(is_polyhedral(s) for s in C.sets)
    return isinstance(C, POLYHEDRAL_SETS)
