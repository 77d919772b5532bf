from dataclasses import dataclass

import numpy as np

from ..config import settings
from ..exceptions import InvalidSetError, UnsupportedOperationError
from .functions import Vector, as_vector


@dataclass(frozen=True, eq=False)
class GridSpec:
    lo: Vector
    hi: Vector
    spacing: float

    def __post_init__(self):
        lo = as_vector(self.lo, "GridSpec.lo")
        hi = as_vector(self.hi, "GridSpec.hi")
        if lo.size != hi.size or np.any(lo > hi):
            raise InvalidSetError("GridSpec bounds must have equal size and lo <= hi")
        if not self.spacing > 0:
            raise InvalidSetError("GridSpec.spacing must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def dim(self) -> int:
        return self.lo.size

    def axes(self):
        # rounding keeps the upper bound on the grid when (hi - lo) / spacing is integral up to noise
        counts = np.floor((self.hi - self.lo) / self.spacing + 1e-9).astype(int) + 1
        return [lo + self.spacing * np.arange(n) for lo, n in zip(self.lo, counts)]

    def size(self) -> int:
        return int(np.prod([ax.size for ax in self.axes()]))

    def points(self) -> np.ndarray:
        """All grid points, one per row, row-major over the axes"""
        n = self.size()
        if n > settings.grid_guard:
            raise UnsupportedOperationError(f"grid has {n} points, above the guard of {settings.grid_guard}")
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)
