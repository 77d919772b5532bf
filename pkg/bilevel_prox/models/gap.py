from dataclasses import dataclass

from .functions import Vector


@dataclass(frozen=True, eq=False)
class GapEvaluation:
    """g_D(x) with the maximizing y* and the certified duality gap"""

    value: float
    maximizer: Vector
    tol: float
    fw_gap: float = 0.0
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class LmrWitness:
    """u in df, w in dg_D (or the operator piece), v in N_C, multiplier lambda_mult"""

    u: Vector
    w: Vector
    v: Vector
    lambda_mult: float
    u_residual: float = 0.0
    w_residual: float = 0.0
    v_residual: float = 0.0
