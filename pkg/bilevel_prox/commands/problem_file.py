# bilevel_prox/commands/problem_file.py
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..exceptions import ProblemFileError
from ..models.functions import Affine, ConvexFunction, MaxAffine, Norm2, Quadratic, Sum
from ..models.operators import AffineOp, GradientOp, MonotoneOperator
from ..models.problems import SbpProblem, Schedule, SmpecProblem
from ..models.sets import Ball, Box, ConvexSet, Halfspace, Intersection, Simplex


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================
# Function specs
# =============================
class AffineSpec(_Spec):
    type: Literal["affine"]
    a: List[float]
    b: float = 0.0

    def build(self) -> Affine:
        return Affine(a=self.a, b=self.b)


class QuadraticSpec(_Spec):
    type: Literal["quadratic"]
    Q: List[List[float]]
    c: List[float]
    r: float = 0.0

    def build(self) -> Quadratic:
        return Quadratic(Q=self.Q, c=self.c, r=self.r)


class Norm2Spec(_Spec):
    type: Literal["norm2"]
    center: List[float]
    weight: float = 1.0

    def build(self) -> Norm2:
        return Norm2(center=self.center, weight=self.weight)


class MaxAffineSpec(_Spec):
    type: Literal["max_affine"]
    A: List[List[float]]
    b: List[float]

    def build(self) -> MaxAffine:
        return MaxAffine(A=self.A, b=self.b)


class SumTermSpec(_Spec):
    weight: float = Field(..., ge=0)
    fn: "FunctionSpec"


class SumSpec(_Spec):
    type: Literal["sum"]
    terms: List[SumTermSpec] = Field(..., min_length=1)

    def build(self) -> Sum:
        return Sum(tuple((t.weight, t.fn.build()) for t in self.terms))


FunctionSpec = Annotated[
    Union[AffineSpec, QuadraticSpec, Norm2Spec, MaxAffineSpec, SumSpec],
    Field(discriminator="type"),
]
SumTermSpec.model_rebuild()


# =============================
# Set specs
# =============================
class BoxSpec(_Spec):
    type: Literal["box"]
    lo: List[float]
    hi: List[float]

    def build(self) -> Box:
        return Box(lo=self.lo, hi=self.hi)


class BallSpec(_Spec):
    type: Literal["ball"]
    center: List[float]
    radius: float

    def build(self) -> Ball:
        return Ball(center=self.center, radius=self.radius)


class SimplexSpec(_Spec):
    type: Literal["simplex"]
    dim: int = Field(..., ge=1)
    scale: float = 1.0

    def build(self) -> Simplex:
        return Simplex(dim=self.dim, scale=self.scale)


class HalfspaceSpec(_Spec):
    type: Literal["halfspace"]
    a: List[float]
    b: float

    def build(self) -> Halfspace:
        return Halfspace(a=self.a, b=self.b)


class IntersectionSpec(_Spec):
    type: Literal["intersection"]
    sets: List["SetSpec"] = Field(..., min_length=1)

    def build(self) -> Intersection:
        return Intersection(tuple(s.build() for s in self.sets))


SetSpec = Annotated[
    Union[BoxSpec, BallSpec, SimplexSpec, HalfspaceSpec, IntersectionSpec],
    Field(discriminator="type"),
]
IntersectionSpec.model_rebuild()


# =============================
# Operator specs
# =============================
class AffineOpSpec(_Spec):
    type: Literal["affine"]
    M: List[List[float]]
    q: List[float]

    def build(self) -> AffineOp:
        return AffineOp(M=self.M, q=self.q)


class GradientOpSpec(_Spec):
    type: Literal["gradient"]
    phi: Annotated[Union[AffineSpec, QuadraticSpec], Field(discriminator="type")]

    def build(self) -> GradientOp:
        return GradientOp(phi=self.phi.build())


OperatorSpec = Annotated[Union[AffineOpSpec, GradientOpSpec], Field(discriminator="type")]


# =============================
# Problem file
# =============================
class ProblemFile(_Spec):
    kind: Literal["sbp", "smpec", "penalty", "gap_prox"]
    f: FunctionSpec
    g: Optional[FunctionSpec] = None
    set: SetSpec
    operator: Optional[OperatorSpec] = None
    schedule: Schedule = Field(default_factory=Schedule)
    x0: List[float]
    max_iter: Optional[int] = Field(default=None, ge=1)
    reference: Optional[List[List[float]]] = None
    eps0: Optional[float] = Field(default=None, gt=0)
    mu: Optional[List[float]] = None
    x_tilde: Optional[List[float]] = None
    inner_tol: Optional[float] = Field(default=None, gt=0)
    bounded_below: bool = True
    coercive: bool = True

    def mu_schedule(self) -> List[float]:
        """Penalty parameters; 2^k for k = 0..15 unless given"""
        return self.mu if self.mu is not None else [2.0**k for k in range(16)]


def _format_errors(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def _read_json(path: str, what: str):
    try:
        with open(path, "rb") as fh:
            return orjson.loads(fh.read())
    except OSError as e:
        raise ProblemFileError(f"cannot read {what}: {e}")
    except orjson.JSONDecodeError as e:
        raise ProblemFileError(f"{what} is not valid JSON: {e}")


def load_problem_file(path: str) -> ProblemFile:
    data = _read_json(path, "problem file")
    if not isinstance(data, dict):
        raise ProblemFileError("problem file must hold an object at the top level")
    try:
        return ProblemFile.model_validate(data)
    except ValidationError as e:
        raise ProblemFileError(f"invalid problem file: {_format_errors(e)}")


def load_reference(path: str) -> np.ndarray:
    """Reference points: a JSON list of points or an object with a "points" list"""
    data = _read_json(path, "reference file")
    if isinstance(data, dict):
        if "points" not in data:
            raise ProblemFileError('reference file lacks "points"')
        data = data["points"]
    try:
        ref = np.atleast_2d(np.asarray(data, dtype=np.float64))
    except (TypeError, ValueError) as e:
        raise ProblemFileError(f"reference points are not numeric: {e}")
    if ref.ndim != 2 or ref.size == 0:
        raise ProblemFileError("reference file must list at least one point")
    return ref


def build_problem(pf: ProblemFile) -> Union[SbpProblem, SmpecProblem]:
    f: ConvexFunction = pf.f.build()
    C: ConvexSet = pf.set.build()
    if pf.kind == "sbp":
        if pf.g is None:
            raise ProblemFileError('sbp problem needs "g"')
        return SbpProblem(f=f, g=pf.g.build(), C=C, x0=pf.x0, bounded_below=pf.bounded_below)
    if pf.operator is None:
        raise ProblemFileError(f'{pf.kind} problem needs "operator"')
    F: MonotoneOperator = pf.operator.build()
    return SmpecProblem(f=f, F=F, C=C, x0=pf.x0, coercive=pf.coercive)
