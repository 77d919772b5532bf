from dataclasses import dataclass, field
from typing import Optional, Tuple

from .functions import ConvexFunction, Vector, as_vector
from .sets import ConvexSet


@dataclass(frozen=True, eq=False)
class ProxSubproblem:
    """min_C psi(z) + ||z - anchor||^2 / (2 lam) to accuracy eta_budget"""

    psi: ConvexFunction
    anchor: Vector
    lam: float
    C: ConvexSet
    eta_budget: float

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_vector(self.anchor, "anchor"))
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.eta_budget > 0:
            raise ValueError("eta_budget must be positive")


@dataclass(frozen=True, eq=False)
class StepCertificate:
    """Witnesses for -(y - anchor)/lam in op(y) + d_{eta1} psi(y) + N_C^{eta2}(y)"""

    eta1: float
    eta2: float
    eta_budget: float
    sub_witness: Vector
    normal_witness: Vector
    residual_norm: float
    sub_pieces: Tuple[Vector, ...] = ()
    normal_pieces: Tuple[Vector, ...] = ()
    operator_value: Optional[Vector] = None
    inner_iterations: int = field(default=0, compare=False)
    # prox objective at each accepted inner candidate, oldest first
    prox_values: Tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def eta_total(self) -> float:
        return self.eta1 + self.eta2
