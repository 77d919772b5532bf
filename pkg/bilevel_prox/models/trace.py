from dataclasses import dataclass, field
from typing import List, Optional

from .certificates import StepCertificate
from .functions import Vector


@dataclass
class TraceRecord:
    k: int
    x: Vector
    f_value: float
    g_value: Optional[float]
    eps: Optional[float] = None
    lam: Optional[float] = None
    eta: Optional[float] = None
    step_norm: Optional[float] = None
    cert: Optional[StepCertificate] = None
    dist_to_ref: Optional[float] = None
    stop_flag: bool = False
    bound_ok: Optional[bool] = None

    @property
    def has_step(self) -> bool:
        return self.step_norm is not None


@dataclass
class Trace:
    kind: str
    records: List[TraceRecord] = field(default_factory=list)
    stop_reason: str = "max_iter"
    failure: Optional[str] = None

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.records if r.has_step)

    @property
    def aborted(self) -> bool:
        return self.failure is not None
