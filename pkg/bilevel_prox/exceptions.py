# bilevel_prox/exceptions.py
from typing import Optional

EXIT_PARSE_ERROR = 2
EXIT_SOLVER_FAILURE = 3
EXIT_CERTIFICATE_FAILURE = 4


class BilevelError(Exception):
    """Base error: a human-readable detail plus the CLI exit code it maps to"""

    exit_code: int = EXIT_SOLVER_FAILURE

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


# --------------------------------
# Construction / validation errors
# --------------------------------
class DimensionMismatchError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class InvalidFunctionError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class InvalidSetError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class ScheduleError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class NotMonotoneError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class NotMonotonePlusError(BilevelError):
    exit_code = EXIT_PARSE_ERROR

    def __init__(self, detail: str = "operator not monotone plus"):
        super().__init__(detail)


class InfeasiblePointError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class NonCompactSetError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class ProblemFileError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


class TraceFileError(BilevelError):
    exit_code = EXIT_PARSE_ERROR


# --------------------------------
# Numerical errors
# --------------------------------
class UnsupportedOperationError(BilevelError):
    pass


class ProjectionError(BilevelError):
    """Dykstra did not settle: the intersection is probably empty or badly posed"""


class CertificateError(BilevelError):
    pass


class InnerSolverError(BilevelError):
    def __init__(self, detail: str, best_residual: float = float("inf")):
        super().__init__(f"{detail} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class StepSizeError(BilevelError):
    pass


class GapEvaluationError(BilevelError):
    pass


class UncertifiedWitnessError(BilevelError):
    exit_code = EXIT_CERTIFICATE_FAILURE
