from .inner_solver import InnerSolver
from .sbp_solver import SbpSolver
from .smpec_solver import SmpecSolver
