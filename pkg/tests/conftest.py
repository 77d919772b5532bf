import copy

import numpy as np
import pytest

from bilevel_prox.config import Settings, apply_settings
from bilevel_prox.models import (
    Affine,
    AffineOp,
    Box,
    Quadratic,
    SbpProblem,
    Schedule,
    SmpecProblem,
)
from bilevel_prox.services.sbp_solver import SbpSolver
from bilevel_prox.services.smpec_solver import SmpecSolver

# Desk problem A: f = x2^2 + x1, g = (x1 - 1)^2 over [-2, 2]^2; S1 = {(1, 0)}
DESK_A_REF = np.array([[1.0, 0.0]])
# Desk problem B: F(x) = M x with M = [[1, -1], [-1, 1]] over [0, 1]^2, f = x1; S1 = {(0, 0)}
DESK_B_REF = np.array([[0.0, 0.0]])


def desk_a_problem() -> SbpProblem:
    return SbpProblem(
        f=Quadratic(Q=[[0.0, 0.0], [0.0, 2.0]], c=[1.0, 0.0]),
        g=Quadratic(Q=[[2.0, 0.0], [0.0, 0.0]], c=[-2.0, 0.0], r=1.0),
        C=Box(lo=[-2.0, -2.0], hi=[2.0, 2.0]),
        x0=[-2.0, 2.0],
    )


def desk_b_problem() -> SmpecProblem:
    return SmpecProblem(
        f=Affine(a=[1.0, 0.0]),
        F=AffineOp(M=[[1.0, -1.0], [-1.0, 1.0]], q=[0.0, 0.0]),
        C=Box(lo=[0.0, 0.0], hi=[1.0, 1.0]),
        x0=[1.0, 1.0],
    )


DESK_A_FILE = {
    "kind": "sbp",
    "f": {"type": "quadratic", "Q": [[0.0, 0.0], [0.0, 2.0]], "c": [1.0, 0.0]},
    "g": {"type": "quadratic", "Q": [[2.0, 0.0], [0.0, 0.0]], "c": [-2.0, 0.0], "r": 1.0},
    "set": {"type": "box", "lo": [-2.0, -2.0], "hi": [2.0, 2.0]},
    "schedule": {"eps_0": 1.0, "p": 1.0, "lambda_lo": 1.0, "lambda_hi": 1.0, "eta_0": 0.1, "q": 2.0},
    "x0": [-2.0, 2.0],
    "reference": [[1.0, 0.0]],
}

DESK_B_FILE = {
    "kind": "smpec",
    "f": {"type": "affine", "a": [1.0, 0.0]},
    "operator": {"type": "affine", "M": [[1.0, -1.0], [-1.0, 1.0]], "q": [0.0, 0.0]},
    "set": {"type": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]},
    "x0": [1.0, 1.0],
    "reference": [[0.0, 0.0]],
}


@pytest.fixture
def desk_a() -> SbpProblem:
    return desk_a_problem()


@pytest.fixture
def desk_b() -> SmpecProblem:
    return desk_b_problem()


@pytest.fixture
def schedule() -> Schedule:
    return Schedule(eps_0=1.0, p=1.0, lambda_lo=1.0, lambda_hi=1.0, eta_0=0.1, q=2.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def restore_settings():
    """Settings files loaded by a test must not leak into the next one"""
    yield
    apply_settings(Settings())


# Full desk runs are shared by every test module that inspects them
@pytest.fixture(scope="session")
def desk_a_trace():
    s = Schedule(eps_0=1.0, p=1.0, lambda_lo=1.0, lambda_hi=1.0, eta_0=0.1, q=2.0)
    return SbpSolver.sbp_run(desk_a_problem(), s, max_iter=5000, ref=DESK_A_REF)


@pytest.fixture(scope="session")
def desk_b_trace():
    s = Schedule(eps_0=1.0, p=1.0, lambda_lo=1.0, lambda_hi=1.0, eta_0=0.1, q=2.0)
    return SmpecSolver.smpec_run(desk_b_problem(), s, max_iter=5000, ref=DESK_B_REF)


@pytest.fixture
def desk_a_file() -> dict:
    return copy.deepcopy(DESK_A_FILE)


@pytest.fixture
def desk_b_file() -> dict:
    return copy.deepcopy(DESK_B_FILE)
