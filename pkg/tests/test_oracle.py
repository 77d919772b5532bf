import numpy as np
import pytest
from numpy.testing import assert_allclose

from bilevel_prox.exceptions import DimensionMismatchError, InvalidSetError, UnsupportedOperationError
from bilevel_prox.models import (
    Affine,
    AffineOp,
    Ball,
    Box,
    GridSpec,
    Halfspace,
    MaxAffine,
    Norm2,
    Quadratic,
    Simplex,
    Sum,
)
from bilevel_prox.services.convex_core import eps_subgrad_residual, project, subgradient
from bilevel_prox.services.gap_stopping import dual_gap
from bilevel_prox.services.oracle import grid_argmin, grid_nearest, grid_sol_vi, raw_eps_check

ABS = MaxAffine.from_pieces([((1.0,), 0.0), ((-1.0,), 0.0)])
HALF_SQ = Quadratic(Q=[[1.0]], c=[0.0])
LINE = GridSpec(lo=[-2.0], hi=[2.0], spacing=0.01)
UNIT_GRID = GridSpec(lo=[0.0, 0.0], hi=[1.0, 1.0], spacing=0.01)


def test_grid_axes_include_upper_bound():
    g = GridSpec(lo=[0.0], hi=[1.0], spacing=0.1)
    assert g.size() == 11
    assert g.axes()[0][-1] == pytest.approx(1.0)


def test_grid_argmin_examples():
    assert_allclose(grid_argmin(ABS, Box(lo=[-2.0], hi=[2.0]), LINE), [[0.0]], atol=1e-12)
    # constant on the box: every feasible grid point is a minimizer
    pts = grid_argmin(Affine(a=[0.0, 0.0]), Box(lo=[0.0, 0.0], hi=[1.0, 1.0]), UNIT_GRID)
    assert pts.shape == (101 * 101, 2)


def test_grid_argmin_respects_the_set():
    pts = grid_argmin(Affine(a=[-1.0]), Box(lo=[-2.0], hi=[0.5]), LINE)
    assert_allclose(pts, [[0.5]], atol=1e-12)


def test_grid_argmin_band_keeps_near_minimizers():
    pts = grid_argmin(HALF_SQ, Box(lo=[-2.0], hi=[2.0]), LINE, band=0.5 * 0.1**2 + 1e-12)
    assert pts.min() == pytest.approx(-0.1)
    assert pts.max() == pytest.approx(0.1)


def test_grid_argmin_with_no_feasible_point():
    with pytest.raises(InvalidSetError):
        grid_argmin(ABS, Ball(center=[10.0], radius=1.0), LINE)


def test_grid_sol_vi_examples():
    # F = x on [-1, 1] solves at 0 only
    sol = grid_sol_vi(AffineOp(M=[[1.0]], q=[0.0]), Box(lo=[-1.0], hi=[1.0]), LINE, 1e-9)
    assert_allclose(sol, [[0.0]], atol=1e-12)
    # F = 1 pushes to the lower end
    sol = grid_sol_vi(AffineOp(M=[[0.0]], q=[1.0]), Box(lo=[-1.0], hi=[1.0]), LINE, 1e-9)
    assert_allclose(sol, [[-1.0]], atol=1e-12)


def test_grid_sol_vi_desk_b_is_the_diagonal(desk_b):
    sol = grid_sol_vi(desk_b.F, desk_b.C, UNIT_GRID, 1e-6)
    assert sol.shape == (101, 2)
    assert_allclose(sol[:, 0], sol[:, 1], atol=1e-12)


def test_gap_sublevel_set_matches_grid_solutions(desk_b):
    # {g_D <= 1e-4} is the band |x1 - x2| <= 0.02 around the diagonal
    band = 1e-4
    P = UNIT_GRID.points()
    gaps = np.array([dual_gap(desk_b.F, desk_b.C, p, 1e-9).value for p in P])
    assert gaps.min() >= -1e-6
    near = P[gaps <= band]
    sol = grid_sol_vi(desk_b.F, desk_b.C, UNIT_GRID, 1e-6)
    assert near.shape[0] >= sol.shape[0]
    for p in near:
        cheb = np.min(np.max(np.abs(sol - p), axis=1))
        assert cheb <= 0.02 + UNIT_GRID.spacing + 1e-9
    for p in sol:
        assert np.min(np.linalg.norm(near - p, axis=1)) <= 1e-12


@pytest.mark.parametrize(
    "f, x, v, eps, expected",
    [
        (ABS, [0.0], [0.5], 0.0, True),
        (ABS, [0.0], [1.5], 0.0, False),
        (HALF_SQ, [0.0], [0.2], 0.02, True),
        (HALF_SQ, [0.0], [0.2], 0.01, False),
    ],
)
def test_raw_eps_check(f, x, v, eps, expected):
    assert raw_eps_check(f, x, v, eps, LINE) is expected


def test_raw_eps_check_rejects_wrong_dimension():
    with pytest.raises(DimensionMismatchError):
        raw_eps_check(ABS, [0.0, 0.0], [1.0, 0.0], 0.1, LINE)


def test_residual_agrees_with_grid_on_random_triples(rng):
    # the conjugate residual certifies what a brute-force grid check sees
    f = Sum(((1.0, Norm2(center=[0.3], weight=1.0)), (0.5, HALF_SQ)))
    grid = GridSpec(lo=[-3.0], hi=[3.0], spacing=0.001)
    for _ in range(200):
        x = rng.uniform(-1.5, 1.5, size=1)
        pieces = [subgradient(Norm2(center=[0.3], weight=1.0), x) + rng.uniform(-0.5, 0.5, size=1), x.copy()]
        pieces[0] = np.clip(pieces[0], -1.0, 1.0)
        v = pieces[0] + 0.5 * pieces[1]
        eps = eps_subgrad_residual(f, x, v, pieces)
        assert raw_eps_check(f, x, v, eps + 1e-7, grid)


@pytest.mark.parametrize(
    "C",
    [
        Box(lo=[0.2, 0.0], hi=[0.7, 1.0]),
        Simplex(dim=2, scale=1.0),
    ],
)
def test_projection_agrees_with_nearest_grid_point(C, rng):
    for x in rng.uniform(-0.5, 1.5, size=(25, 2)):
        p = project(C, x)
        q = grid_nearest(C, x, UNIT_GRID)
        assert np.max(np.abs(p - q)) <= UNIT_GRID.spacing + 1e-9


def test_ball_projection_agrees_with_nearest_grid_point(rng):
    C = Ball(center=[0.5, 0.5], radius=0.4)
    for x in rng.uniform(-0.5, 1.5, size=(25, 2)):
        p = project(C, x)
        q = grid_nearest(C, x, UNIT_GRID)
        d_p, d_q = np.linalg.norm(x - p), np.linalg.norm(x - q)
        # grid membership carries a 1e-9 slack
        assert d_q >= d_p - 1e-8
        assert d_q <= d_p + np.sqrt(2.0) * UNIT_GRID.spacing + 1e-12


def test_grid_guard_refuses_huge_grids():
    g = GridSpec(lo=[0.0, 0.0, 0.0], hi=[1.0, 1.0, 1.0], spacing=1e-3)
    with pytest.raises(UnsupportedOperationError):
        grid_argmin(Affine(a=[1.0, 0.0, 0.0]), Halfspace(a=[1.0, 0.0, 0.0], b=1.0), g)


WIDE_LINE = GridSpec(lo=[-6.0], hi=[6.0], spacing=0.001)
# bound on |v - f'| near the maximizer of v z - f(z) for the families below
GRID_SLOPE = 20.0


def _random_atom_with_dual(rng):
    """A 1-D atom and a v in dom f* whose conjugate maximizer lies inside WIDE_LINE"""
    kind = rng.integers(3)
    if kind == 0:
        f = Quadratic(Q=[[rng.uniform(1.0, 2.0)]], c=[rng.uniform(-1.0, 1.0)])
        return f, rng.uniform(-2.0, 2.0, size=1)
    if kind == 1:
        w = rng.uniform(0.5, 2.0)
        return Norm2(center=rng.uniform(-1.0, 1.0, size=1), weight=w), rng.uniform(-w, w, size=1)
    slopes = np.array([-1.5, 0.0, 1.5]) + rng.uniform(-0.2, 0.2, size=3)
    f = MaxAffine(A=slopes.reshape(-1, 1), b=rng.uniform(-1.0, 1.0, size=3))
    return f, rng.uniform(slopes.min(), slopes.max(), size=1)


def test_residual_agrees_with_grid_on_random_families(rng):
    converse = 0
    for _ in range(100):
        f, v = _random_atom_with_dual(rng)
        x = rng.uniform(-2.0, 2.0, size=1)
        eps = eps_subgrad_residual(f, x, v)
        assert raw_eps_check(f, x, v, eps + 1e-7, WIDE_LINE)
        # the grid misses the true supremum by at most spacing * slope / 2
        if eps > WIDE_LINE.spacing * GRID_SLOPE + 1e-6:
            assert not raw_eps_check(f, x, v, eps - WIDE_LINE.spacing * GRID_SLOPE, WIDE_LINE)
            converse += 1
    assert converse >= 20
