import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from splitrate import (
    AffineSubspace, Ball, Box, EpigraphPowerNorm, Halfspace, Hyperplane, SemialgebraicMeta,
    SetCollection, UsageError, distance, polynomial_degree, project, reflect, relaxed_project,
)

SETS_2D = [
    Halfspace([1.0, 0.0], 0.0),
    Halfspace([1.0, -2.0], 0.5),
    Hyperplane([1.0, 0.0], 0.0),
    Ball([-1.0, 0.0], 1.0),
    Box([-1.0, 0.0], [2.0, 0.5]),
    Box([0.0, -np.inf], [np.inf, np.inf]),
    AffineSubspace([[0.6, 0.8]], [1.0, -1.0]),
    EpigraphPowerNorm(1, 2),
    EpigraphPowerNorm(1, 4),
]

points = arrays(np.float64, 2, elements=st.floats(-50, 50, allow_nan=False))
set_index = st.integers(0, len(SETS_2D) - 1)


def test_halfspace_interior_point_unchanged():
    assert np.allclose(project(Halfspace([1, 0], 0), [-1, 2]), [-1, 2])


def test_ball_projection_closed_form_and_grid():
    ball = Ball([-1.0, 0.0], 1.0)
    p = project(ball, [1.0, 0.0])
    assert np.allclose(p, [0.0, 0.0])
    # brute force over a dense disk grid
    r = np.sqrt(np.linspace(0, 1, 400))[:, None]
    a = np.linspace(0, 2 * np.pi, 800)[None, :]
    grid = np.stack([-1 + r * np.cos(a), r * np.sin(a)], axis=-1).reshape(-1, 2)
    best = grid[np.argmin(np.linalg.norm(grid - [1.0, 0.0], axis=1))]
    assert np.linalg.norm(best - p) < 1e-2


def test_epigraph_projection_root():
    tau = project(EpigraphPowerNorm(1, 2), [1.0, 0.0])
    # bisection oracle on 2 tau^3 + tau = 1
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if 2 * mid ** 3 + mid < 1 else (lo, mid)
    assert tau[0] == pytest.approx(lo, abs=1e-12)
    assert tau[1] == pytest.approx(lo ** 2, abs=1e-12)
    assert lo == pytest.approx(0.58975, abs=1e-5)


@pytest.mark.parametrize("cset, x, expected", [
    (Ball([-1.0, 0.0], 1.0), [-1.0, 0.0], 0.0),
    (Halfspace([1.0, 0.0], 0.0), [3.0, 4.0], 3.0),
    (Hyperplane([1.0, 0.0], 0.0), [-2.0, 1.0], 2.0),
])
def test_distance_examples(cset, x, expected):
    assert distance(cset, x) == pytest.approx(expected)


def test_relaxed_projection_examples():
    assert np.allclose(relaxed_project(Halfspace([1, 0], 0), 1.0, [3.0, 0.0]), [1.0, 0.0])
    ball = Ball([-1.0, 0.0], 1.0)
    y = relaxed_project(ball, 1.0, [1.0, 0.0])
    assert np.allclose(y, [1 / 3, 0.0])
    # sampled minimisation of dist^2 + |y - x|^2 / (2 eta)
    g = np.stack(np.meshgrid(np.linspace(-0.5, 1, 601), np.linspace(-0.5, 0.5, 401)), -1).reshape(-1, 2)
    obj = ball.distance(g) ** 2 + np.sum((g - [1.0, 0.0]) ** 2, axis=1) / 2.0
    assert np.linalg.norm(g[np.argmin(obj)] - y) < 5e-3
    assert np.allclose(relaxed_project(ball, 3.7, [-1.2, 0.3]), [-1.2, 0.3])


def test_reflection_examples():
    assert np.allclose(reflect(Hyperplane([1, 0], 0), [1.0, 1.0]), [-1.0, 1.0])
    assert np.allclose(reflect(Ball([-1, 0], 1), [-1.5, 0.2]), [-1.5, 0.2])
    assert np.allclose(reflect(Ball([-1, 0], 1), [1.0, 0.0]), [-1.0, 0.0])


@pytest.mark.parametrize("make", [
    lambda: Halfspace([0.0, 0.0], 1.0),
    lambda: Hyperplane([0.0, 0.0], 1.0),
    lambda: Ball([0.0, 0.0], -1.0),
    lambda: Box([1.0, 0.0], [0.0, 1.0]),
    lambda: Box([np.nan, 0.0], [1.0, 1.0]),
    lambda: AffineSubspace([[1.0, 1.0]], [0.0, 0.0]),
    lambda: EpigraphPowerNorm(1, 3),
    lambda: EpigraphPowerNorm(1, 0),
    lambda: Halfspace([np.inf, 0.0], 1.0),
])
def test_invalid_sets_rejected(make):
    with pytest.raises(UsageError):
        make()


def test_dimension_mismatch_rejected():
    with pytest.raises(UsageError):
        project(Ball([0.0, 0.0], 1.0), [1.0, 2.0, 3.0])
    with pytest.raises(UsageError):
        distance(Halfspace([1.0, 0.0], 0.0), [np.nan, 0.0])
    with pytest.raises(UsageError):
        SetCollection((Ball([0.0], 1.0), Ball([0.0, 0.0], 1.0)))


def test_box_with_infinite_bounds_projects_to_orthant():
    assert np.allclose(project(Box([0.0], [np.inf]), [-3.0]), [0.0])
    assert np.allclose(project(Box([0.0], [np.inf]), [3.0]), [3.0])


def test_batches_match_single_points(rng):
    X = rng.uniform(-5, 5, size=(50, 2))
    for cset in SETS_2D:
        batch = cset.project(X)
        single = np.array([cset.project(x) for x in X])
        assert np.allclose(batch, single, atol=1e-14)


def test_degrees_and_metadata():
    assert polynomial_degree(EpigraphPowerNorm(2, 6)) == 6
    assert polynomial_degree(Halfspace([1.0], 0.0)) == 1
    meta = SemialgebraicMeta(2, 4, EpigraphPowerNorm(1, 4))
    assert polynomial_degree(meta) == 4
    assert np.allclose(meta.project([1.0, 0.0]), EpigraphPowerNorm(1, 4).project([1.0, 0.0]))
    with pytest.raises(UsageError):
        SemialgebraicMeta(3, 4, EpigraphPowerNorm(1, 4))


def test_set_collection_distances():
    coll = SetCollection((Halfspace([1.0, 0.0], 0.0), Hyperplane([0.0, 1.0], 0.0)))
    assert np.allclose(coll.distances([3.0, -4.0]), [3.0, 4.0])
    assert coll.max_distance([3.0, -4.0]) == pytest.approx(4.0)
    assert len(coll) == 2 and coll.dim == 2


@settings(max_examples=200, deadline=None)
@given(set_index, points, points)
def test_projection_firmly_nonexpansive(k, x, y):
    P = SETS_2D[k]
    px, py = P.project(x), P.project(y)
    lhs = np.sum((px - py) ** 2) + np.sum(((x - px) - (y - py)) ** 2)
    assert lhs <= np.sum((x - y) ** 2) + 1e-8 * max(1.0, np.sum((x - y) ** 2))


@settings(max_examples=200, deadline=None)
@given(set_index, points)
def test_projection_idempotent_and_in_set(k, x):
    P = SETS_2D[k]
    p = P.project(x)
    assert np.allclose(P.project(p), p, atol=1e-9 * max(1.0, np.abs(x).max()))
    assert P.membership_residual(p) <= 1e-8 * max(1.0, np.abs(x).max() ** 4)


@settings(max_examples=200, deadline=None)
@given(set_index, points, points)
def test_projection_variational_inequality(k, x, z):
    P = SETS_2D[k]
    p = P.project(x)
    c = P.project(z)  # an arbitrary point of the set
    scale = max(1.0, np.abs(x).max(), np.abs(z).max()) ** 2
    assert np.dot(x - p, c - p) <= 1e-8 * scale


@settings(max_examples=100, deadline=None)
@given(set_index, points, st.floats(0.05, 20.0))
def test_relaxed_projection_is_prox_of_scaled_distance(k, x, eta):
    P = SETS_2D[k]
    y = relaxed_project(P, eta, x)
    # stationarity: 2 eta (y - P y) + (y - x) = 0
    assert np.allclose(2 * eta * (y - P.project(y)) + (y - x), 0.0,
                       atol=1e-7 * max(1.0, np.abs(x).max()))


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([2, 4, 6]), arrays(np.float64, 3, elements=st.floats(-20, 20)))
def test_epigraph_projection_stationarity(d, x):
    E = EpigraphPowerNorm(2, d)
    p = E.project(x)
    zp, tp = p[:2], p[2]
    nz = np.linalg.norm(zp)
    assert tp >= nz ** d - 1e-9 * max(1.0, tp)
    if tp <= x[2] + 1e-12 and np.allclose(p, x):
        return
    # x - p is a nonnegative multiple of the outward normal (d |z|^(d-2) z, -1)
    normal = np.append(d * nz ** (d - 2) * zp if nz > 0 else np.zeros(2), -1.0)
    lam = (p[2] - x[2])
    assert lam >= -1e-9
    assert np.allclose(x - p, lam * normal, atol=1e-7 * max(1.0, np.abs(x).max()) ** 2)


def test_epigraph_higher_dimension_uses_radial_structure():
    E = EpigraphPowerNorm(3, 4)
    x = np.array([0.3, -0.4, 0.0, -1.0])
    p = E.project(x)
    # the projected block stays parallel to the input block
    assert abs(x[0] * p[1] - x[1] * p[0]) < 1e-14
    assert p[3] == pytest.approx(np.linalg.norm(p[:3]) ** 4, rel=1e-10)
    assert math.isclose(E.distance(p), 0.0, abs_tol=1e-12)
