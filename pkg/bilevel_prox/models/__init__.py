from .functions import Affine, Atom, ConvexFunction, MaxAffine, Norm2, Quadratic, Sum, Vector, as_vector
from .sets import Ball, Box, ConvexSet, Halfspace, Intersection, Simplex, is_compact, is_polyhedral
from .operators import AffineOp, GradientOp, MonotoneOperator, affine_form
from .certificates import ProxSubproblem, StepCertificate
from .problems import SbpProblem, Schedule, SmpecProblem
from .trace import Trace, TraceRecord
from .gap import GapEvaluation, LmrWitness
from .grid import GridSpec
