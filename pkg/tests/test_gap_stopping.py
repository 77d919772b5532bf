import numpy as np
import pytest
from numpy.testing import assert_allclose

from bilevel_prox.exceptions import DimensionMismatchError, NonCompactSetError, ScheduleError, UncertifiedWitnessError
from bilevel_prox.models import Affine, AffineOp, Box, Halfspace, LmrWitness, Schedule, SmpecProblem, TraceRecord
from bilevel_prox.services.gap_stopping import (
    assemble_lmr_witness,
    dual_gap,
    eps_lmr_check,
    gap_path_witness,
    gap_prox_run,
    gap_subgradient,
    penalty_solve,
    r_smpec_feasible,
    step_stop_check,
)
from bilevel_prox.services.sbp_solver import SbpSolver
from bilevel_prox.services.smpec_solver import SmpecSolver

IDENTITY_1D = AffineOp(M=[[1.0]], q=[0.0])
INTERVAL = Box(lo=[-1.0], hi=[1.0])
ROTATION = AffineOp(M=[[0.0, -1.0], [1.0, 0.0]], q=[0.0, 0.0])
SQUARE = Box(lo=[-1.0, -1.0], hi=[1.0, 1.0])


@pytest.mark.parametrize("x, expected, maximizer", [([0.0], 0.0, [0.0]), ([1.0], 0.25, [0.5])])
def test_dual_gap_one_dimensional(x, expected, maximizer):
    ev = dual_gap(IDENTITY_1D, INTERVAL, x)
    assert ev.value == pytest.approx(expected, abs=1e-5)
    assert_allclose(ev.maximizer, maximizer, atol=2e-3)


def test_dual_gap_skew_closed_form():
    ev = dual_gap(ROTATION, SQUARE, [0.3, -0.4])
    assert ev.value == pytest.approx(0.7, abs=1e-12)


def test_dual_gap_skew_random_points(rng):
    for x in rng.uniform(-1, 1, size=(100, 2)):
        assert dual_gap(ROTATION, SQUARE, x).value == pytest.approx(abs(x[0]) + abs(x[1]), abs=1e-6)


def test_dual_gap_needs_compact_set():
    with pytest.raises(NonCompactSetError):
        dual_gap(IDENTITY_1D, Halfspace(a=[1.0], b=0.0), [0.0])


def test_dual_gap_is_convex(rng, desk_b):
    tol = 1e-7
    for _ in range(20):
        x, z = rng.uniform(0, 1, size=(2, 2))
        mid = dual_gap(desk_b.F, desk_b.C, 0.5 * (x + z), tol).value
        ends = 0.5 * dual_gap(desk_b.F, desk_b.C, x, tol).value + 0.5 * dual_gap(desk_b.F, desk_b.C, z, tol).value
        assert mid <= ends + 2 * tol


def test_gap_subgradient_examples():
    assert_allclose(gap_subgradient(IDENTITY_1D, INTERVAL, [1.0]), [0.5], atol=2e-3)
    # y* = (-1, -1) for x = (0.3, -0.4), so F(y*) = (1, -1)
    assert_allclose(gap_subgradient(ROTATION, SQUARE, [0.3, -0.4]), [1.0, -1.0], atol=1e-12)


def test_gap_subgradient_at_solution_is_small():
    w = gap_subgradient(IDENTITY_1D, INTERVAL, [0.0])
    assert abs(w[0]) <= 2e-3


@pytest.mark.parametrize("x, expected", [([0.0], True), ([1.0], False), ([2.0], False)])
def test_r_smpec_feasible(x, expected):
    assert r_smpec_feasible(IDENTITY_1D, INTERVAL, x, 1e-6) is expected


def test_penalty_path_on_desk_b(desk_b):
    mus = [2.0**k for k in range(16)]
    trace = penalty_solve(desk_b, mus, inner_tol=1e-6, x_tilde=np.zeros(2), ref=[[0.0, 0.0]])
    assert trace.kind == "penalty"
    assert len(trace.records) == 16
    assert np.linalg.norm(trace.final.x) <= 1e-2
    assert all(r.bound_ok for r in trace.records)
    assert_allclose([r.eps for r in trace.records], [1.0 / m for m in mus])


def test_penalty_with_constant_objective_reaches_vi_solution(desk_b):
    prob = SmpecProblem(f=Affine(a=[0.0, 0.0], b=3.0), F=desk_b.F, C=desk_b.C, x0=[1.0, 0.0])
    trace = penalty_solve(prob, [1.0, 10.0, 100.0])
    assert trace.final.g_value <= 1e-6


def test_single_huge_penalty(desk_b):
    trace = penalty_solve(desk_b, [1e8])
    assert trace.final.g_value <= 1e-6


def test_penalty_rejects_decreasing_parameters(desk_b):
    with pytest.raises(ScheduleError):
        penalty_solve(desk_b, [4.0, 2.0])


@pytest.mark.parametrize(
    "x_k, x_k1, lam, eps, eps0, expected",
    [
        ([1.0, 1.0], [1.0, 1.0], 1.0, 0.5, 1.0, True),
        ([0.0], [0.1], 1.0, 0.01, 1.0, False),
        ([0.0], [0.005], 1.0, 0.01, 1.0, True),
    ],
)
def test_step_stop_check(x_k, x_k1, lam, eps, eps0, expected):
    assert step_stop_check(x_k, x_k1, lam, eps, eps0) is expected


def test_eps_lmr_check_examples():
    kkt = LmrWitness(u=np.array([-2.0]), w=np.array([1.0]), v=np.array([0.0]), lambda_mult=2.0)
    assert eps_lmr_check(kkt, 1e-12)
    far = LmrWitness(u=np.array([0.1]), w=np.array([0.0]), v=np.array([0.0]), lambda_mult=1.0)
    assert not eps_lmr_check(far, 0.05)


def test_eps_lmr_check_refuses_uncertified_witness():
    w = LmrWitness(u=np.array([0.0]), w=np.array([0.0]), v=np.array([0.0]), lambda_mult=1.0, v_residual=1e-3)
    with pytest.raises(UncertifiedWitnessError):
        eps_lmr_check(w, 1.0)


def _stop_rows(trace):
    return [(r, nxt) for r, nxt in zip(trace.records, trace.records[1:]) if r.stop_flag]


def test_stopping_witness_on_desk_b(desk_b, schedule):
    trace = SmpecSolver.smpec_run(desk_b, schedule, max_iter=5000, eps0=0.1)
    assert trace.stop_reason == "stopping_criterion"
    rows = _stop_rows(trace)
    assert rows
    for record, nxt in rows:
        witness = assemble_lmr_witness(record, nxt.x, desk_b)
        assert witness.lambda_mult == pytest.approx(1.0 / record.eps)
        assert eps_lmr_check(witness, 0.1)


def test_stopping_witness_on_desk_a(desk_a, schedule):
    trace = SbpSolver.sbp_run(desk_a, schedule, max_iter=5000, eps0=0.1)
    rows = _stop_rows(trace)
    assert rows
    for record, nxt in rows:
        assert eps_lmr_check(assemble_lmr_witness(record, nxt.x, desk_a), 0.1)


def test_witness_needs_certificate(desk_b_trace, desk_b):
    with pytest.raises(UncertifiedWitnessError):
        assemble_lmr_witness(desk_b_trace.final, desk_b_trace.final.x, desk_b)


def test_gap_prox_run_moves_toward_solution(desk_b, schedule):
    trace = gap_prox_run(desk_b, schedule, max_iter=40, ref=[[0.0, 0.0]])
    assert trace.kind == "gap_prox"
    assert [r.k for r in trace.records] == list(range(len(trace.records)))
    assert trace.final.dist_to_ref < trace.records[0].dist_to_ref
    assert all(r.g_value >= -1e-6 for r in trace.records)


def test_dual_gap_rejects_wrong_dimension():
    with pytest.raises(DimensionMismatchError):
        dual_gap(IDENTITY_1D, INTERVAL, [0.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        gap_subgradient(ROTATION, SQUARE, [0.3])


def _interval_problem() -> SmpecProblem:
    # g_D(x) = x^2 / 4 on [-1, 1] with Danskin element x / 2
    return SmpecProblem(f=Affine(a=[0.5]), F=IDENTITY_1D, C=INTERVAL, x0=[1.0])


def test_gap_prox_stop_rows_carry_certified_witnesses(schedule):
    prob = _interval_problem()
    trace = gap_prox_run(prob, schedule, max_iter=200, eps0=0.1)
    assert trace.stop_reason == "stopping_criterion"
    rows = _stop_rows(trace)
    assert len(rows) == 1
    for record, nxt in rows:
        assert step_stop_check(record.x, nxt.x, record.lam, record.eps, 0.1)
        witness = gap_path_witness(record, nxt.x, prob)
        assert witness.lambda_mult == pytest.approx(1.0 / record.eps)
        assert witness.w_residual <= 1e-9
        assert_allclose(witness.w, 0.5 * nxt.x, atol=1e-9)
        assert_allclose(witness.v, [0.0], atol=1e-12)
        assert eps_lmr_check(witness, 0.1)


def test_penalty_rows_carry_certified_witnesses():
    prob = _interval_problem()
    mus = [2.0, 10.0, 100.0]
    trace = penalty_solve(prob, mus)
    for record, mu in zip(trace.records, mus):
        # minimizer of x/2 + mu x^2/4 is -1/mu
        assert_allclose(record.x, [-1.0 / mu], atol=1e-6)
        witness = gap_path_witness(record, record.x, prob)
        assert witness.lambda_mult == pytest.approx(mu)
        assert eps_lmr_check(witness, 1e-4)


def test_gap_path_witness_needs_penalty_parameter(desk_b):
    trace = gap_prox_run(desk_b, Schedule(), max_iter=2)
    with pytest.raises(UncertifiedWitnessError):
        gap_path_witness(trace.final, trace.final.x, desk_b)


def test_gap_path_witness_at_boundary_point():
    # at x = 1 the pull u + w / eps = -1 points out of the interval and v absorbs it
    prob = SmpecProblem(f=Affine(a=[-3.0]), F=AffineOp(M=[[0.0]], q=[1.0]), C=INTERVAL, x0=[1.0])
    record = TraceRecord(k=0, x=np.array([1.0]), f_value=-3.0, g_value=None, eps=0.5)
    witness = gap_path_witness(record, [1.0], prob)
    assert_allclose(witness.u, [-3.0])
    assert_allclose(witness.w, [1.0])
    assert_allclose(witness.v, [1.0], rtol=1e-5)
    assert witness.v_residual <= 1e-9
    assert eps_lmr_check(witness, 1e-4)


@pytest.mark.parametrize("which", ["desk_b", "rotation"])
def test_danskin_element_is_a_gap_subgradient(which, desk_b, rng):
    F, C = (desk_b.F, desk_b.C) if which == "desk_b" else (ROTATION, SQUARE)
    lo, hi = (0.0, 1.0) if which == "desk_b" else (-1.0, 1.0)
    tol = 1e-7
    for x in rng.uniform(lo, hi, size=(10, 2)):
        w = gap_subgradient(F, C, x, tol, check=False)
        gx = dual_gap(F, C, x, tol).value
        for z in rng.uniform(lo, hi, size=(10, 2)):
            assert dual_gap(F, C, z, tol).value >= gx + w @ (z - x) - 3.0 * tol
