from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import settings
from ..exceptions import DimensionMismatchError, InfeasiblePointError, InvalidFunctionError, NotMonotonePlusError
from .functions import ConvexFunction, Vector, as_vector
from .operators import MonotoneOperator
from .sets import ConvexSet, is_compact


class Schedule(BaseModel):
    """Power-family parameter sequences (eps_k, lambda_k, eta_k)"""

    model_config = ConfigDict(frozen=True)

    eps_0: float = Field(default_factory=lambda: settings.eps_0, description="eps_k = eps_0 / (k+1)^p")
    p: float = Field(default_factory=lambda: settings.eps_power, description="decay power of eps_k")
    lambda_rule: Literal["constant", "alternating"] = Field(default="constant", description="lambda_k family")
    lambda_lo: float = Field(default_factory=lambda: settings.lambda_default, description="lower lambda bound")
    lambda_hi: float = Field(default_factory=lambda: settings.lambda_default, description="upper lambda bound")
    eta_0: float = Field(default_factory=lambda: settings.eta_0, description="eta_k = eta_0 / (k+1)^q")
    q: float = Field(default_factory=lambda: settings.eta_power, description="decay power of eta_k")

    def eps(self, k: int) -> float:
        return self.eps_0 / (k + 1) ** self.p

    def lam(self, k: int) -> float:
        if self.lambda_rule == "alternating" and k % 2 == 0:
            return self.lambda_lo
        return self.lambda_hi

    def eta(self, k: int) -> float:
        return self.eta_0 / (k + 1) ** self.q


def _check_start(x0: Vector, C: ConvexSet, dim: int) -> None:
    from ..services.convex_core import distance

    if x0.size != dim or C.dim != dim:
        raise DimensionMismatchError(f"start point, set and functions disagree on dimension ({x0.size}, {C.dim}, {dim})")
    d = distance(C, x0)
    if d > settings.membership_tol:
        raise InfeasiblePointError(f"x0 lies outside C (distance {d:.3e})")


def _check_growth(f: ConvexFunction, C: ConvexSet, name: str, strict: bool) -> None:
    """Finite values on sampled points of a compact C; otherwise the asymptotic
    slope of f along sampled recession directions of C must be >= 0 (> 0 when strict)
    """
    from ..services.convex_core import eval_points, recession_directions, recession_slope, sample_points

    if is_compact(C):
        if not np.all(np.isfinite(eval_points(f, sample_points(C, settings.growth_samples)))):
            raise InvalidFunctionError(f"{name} is not finite on C")
        return
    tol = settings.conjugate_tol
    for d in recession_directions(C, settings.growth_samples):
        slope = recession_slope(f, d)
        if slope < -tol or (strict and slope <= tol):
            kind = "does not grow" if strict else "is unbounded below"
            raise InvalidFunctionError(f"{name} {kind} on C along the direction {np.round(d, 6).tolist()}")


@dataclass(frozen=True, eq=False)
class SbpProblem:
    """min f over S0 = argmin_C g"""

    f: ConvexFunction
    g: ConvexFunction
    C: ConvexSet
    x0: Vector
    bounded_below: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x0", as_vector(self.x0, "x0"))
        if self.f.dim != self.g.dim:
            raise DimensionMismatchError(f"f has dimension {self.f.dim}, g has {self.g.dim}")
        _check_start(self.x0, self.C, self.f.dim)
        if not self.bounded_below:
            raise InvalidFunctionError("f and g must be bounded below on C")
        _check_growth(self.f, self.C, "f", strict=False)
        _check_growth(self.g, self.C, "g", strict=False)

    @property
    def dim(self) -> int:
        return self.f.dim


@dataclass(frozen=True, eq=False)
class SmpecProblem:
    """min f over sol(VI(F, C))"""

    f: ConvexFunction
    F: MonotoneOperator
    C: ConvexSet
    x0: Vector
    coercive: bool = True

    def __post_init__(self):
        from ..services.smpec_solver import SmpecSolver

        object.__setattr__(self, "x0", as_vector(self.x0, "x0"))
        if self.f.dim != self.F.dim:
            raise DimensionMismatchError(f"f has dimension {self.f.dim}, F has {self.F.dim}")
        _check_start(self.x0, self.C, self.f.dim)
        if not SmpecSolver.check_monotone_plus(self.F):
            raise NotMonotonePlusError()
        # a compact C bounds the solution set whatever f does
        if not self.coercive and not is_compact(self.C):
            raise InvalidFunctionError("f must be coercive when C is unbounded")
        _check_growth(self.f, self.C, "f", strict=True)

    @property
    def dim(self) -> int:
        return self.f.dim
