import itertools
import math

import numpy as np
import pytest

from engine.errors import DomainError
from engine.metricspace import (
    Correspondence,
    FiniteMetricSpace,
    bishop_gromov_ceiling,
    check_almost_isometry,
    epsilon_net_sample,
    gh_correspondence,
    gh_lower,
    gh_upper,
    metric_closure,
    packing_bounds,
    packing_number,
    packing_table,
)
from engine.spaceform import SpaceFormParams, SpaceFormSpace, origin


def circle(n=40, scale=1.0):
    step = 2 * math.pi / n
    i = np.arange(n)
    gap = np.abs(i[:, None] - i[None, :])
    D = scale * np.minimum(gap, n - gap) * step
    return FiniteMetricSpace(tuple(f"c{k}" for k in range(n)), D)


def grid(side=5):
    xy = np.array([(x, y) for x in range(side) for y in range(side)], dtype=float)
    D = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1))
    return FiniteMetricSpace(tuple(f"g{k}" for k in range(len(xy))), D, xy)


def scatter(n, rng):
    xy = rng.uniform(0.0, 1.0, (n, 2))
    D = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1))
    return FiniteMetricSpace(tuple(f"q{k}" for k in range(n)), D, xy)


def enumerate_packing(X, s, t, center):
    candidates = [i for i in range(X.n) if X.D[center, i] <= t - s]
    for size in range(len(candidates), 0, -1):
        for subset in itertools.combinations(candidates, size):
            if all(X.D[a, b] > 2 * s for a, b in itertools.combinations(subset, 2)):
                return size
    return 0


@pytest.fixture(scope="module")
def plane():
    return SpaceFormSpace(SpaceFormParams(0.0, 2))


# ========== finite metric spaces ==========

def test_rejects_bad_matrices():
    with pytest.raises(DomainError):
        FiniteMetricSpace(("a", "b"), np.zeros((3, 3)))
    with pytest.raises(DomainError):
        FiniteMetricSpace(("a", "b"), [[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(DomainError):
        FiniteMetricSpace(("a", "b"), [[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DomainError):
        FiniteMetricSpace(("a",), [[1.0]])


def test_triangle_inequality_is_checked():
    D = [[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]]
    with pytest.raises(DomainError) as err:
        FiniteMetricSpace(("a", "b", "c"), D)
    assert err.value.bound.startswith("d(x,z) <= d(x,y) + d(y,z)")
    assert FiniteMetricSpace(("a", "b", "c"), D, triangle_tol=1.5).diameter == 3.0


def test_metric_closure_repairs_near_metrics():
    D = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]])
    closed = metric_closure(D)
    assert closed[0, 2] == 2.0
    FiniteMetricSpace(("a", "b", "c"), closed)


def test_diameter_and_radius():
    X = grid(3)
    assert X.diameter == pytest.approx(2 * math.sqrt(2))
    assert X.radius == pytest.approx(math.sqrt(2))


def test_text_format(tmp_path):
    X = circle(6)
    path = tmp_path / "circle.txt"
    X.save(path)
    Y = FiniteMetricSpace.load(path)
    assert Y.labels == X.labels
    assert np.array_equal(Y.D, X.D)
    with pytest.raises(DomainError):
        FiniteMetricSpace.from_text("3\na\nb\n")
    with pytest.raises(DomainError):
        FiniteMetricSpace.from_text("two\n")


def test_subspace_keeps_coordinates():
    X = grid(3)
    S = X.subspace([0, 4, 8])
    assert S.labels == ("g0", "g4", "g8")
    assert S.coords[1] == pytest.approx([1.0, 1.0])


# ========== sampling ==========

def test_net_is_separated_and_covering(plane):
    center = origin(plane.params).coords
    eps = 0.2
    X = epsilon_net_sample(plane, center, 1.0, eps, seed=3)
    off = X.D[~np.eye(X.n, dtype=bool)]
    assert np.min(off) >= 0.85 * eps - 1e-12
    rng = np.random.default_rng(9)
    r = np.sqrt(rng.uniform(0.0, 1.0, 300))
    a = rng.uniform(0.0, 2 * math.pi, 300)
    queries = np.column_stack([r * np.cos(a), r * np.sin(a)])
    assert np.max(np.min(plane.pairwise(queries, X.coords), axis=1)) <= eps


def test_net_size_on_the_unit_disc(plane):
    X = epsilon_net_sample(plane, origin(plane.params).coords, 1.0, 0.2)
    assert 20 <= X.n <= 120


def test_net_is_seeded(plane):
    center = origin(plane.params).coords
    a = epsilon_net_sample(plane, center, 0.6, 0.2, seed=5)
    b = epsilon_net_sample(plane, center, 0.6, 0.2, seed=5)
    assert np.array_equal(a.coords, b.coords)


def test_tiny_ball_is_one_point(plane):
    X = epsilon_net_sample(plane, origin(plane.params).coords, 0.05, 0.2)
    assert X.n == 1
    with pytest.raises(DomainError):
        epsilon_net_sample(plane, origin(plane.params).coords, 1.0, 0.0)


# ========== packing ==========

def test_packing_on_a_grid():
    X = grid(5)
    # the 3x3 block around the centre holds its four corners and the centre
    assert packing_number(X, 0.5, 2.0, 12) == 5
    assert packing_bounds(X, 0.5, 2.0, 12) == (5, 5)
    assert packing_number(X, 2.0, 1.0, 12) == 1
    with pytest.raises(DomainError):
        packing_number(X, 0.0, 1.0, 12)


def test_packing_on_a_line():
    X = FiniteMetricSpace(("a", "b", "c"), [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    # only the two ends are more than 1.2 apart
    assert packing_number(X, 0.6, 10.0, 1) == 2


def test_packing_matches_enumeration():
    rng = np.random.default_rng(12)
    for _ in range(50):
        X = scatter(12, rng)
        s = rng.uniform(0.05, 0.25)
        t = rng.uniform(s + 0.2, 1.0)
        center = int(rng.integers(X.n))
        assert packing_number(X, s, t, center) == enumerate_packing(X, s, t, center)


def test_packing_is_monotone():
    X = grid(5)
    s_values = [0.3, 0.5, 0.8, 1.2, 2.0]
    t_values = [1.0, 1.5, 2.0, 3.0, 4.0]
    counts = np.array([[packing_number(X, s, t, 12) for t in t_values] for s in s_values])
    assert np.all(np.diff(counts, axis=0) <= 0)
    assert np.all(np.diff(counts, axis=1) >= 0)


def test_packing_table_lookup_is_conservative():
    table = packing_table(grid(5), [0.5], [2.0], centers=[12])
    assert table.counts.tolist() == [[5]]
    assert table.lookup(0.6, 1.5) == 5
    assert table.scaled(0.5).counts.tolist() == [[2]]
    with pytest.raises(DomainError):
        table.lookup(0.4, 2.0)


def test_bishop_gromov_ceiling():
    assert bishop_gromov_ceiling(2, 0.0, 0.5, 2.0) == pytest.approx(16.0)


# ========== almost isometries ==========

def test_almost_isometry_threshold():
    X, Y = circle(), circle(scale=1.1)
    tau = 0.1 * X.diameter
    assert check_almost_isometry(np.arange(40), X, Y, tau + 1e-6).passed
    report = check_almost_isometry(np.arange(40), X, Y, tau - 1e-6)
    assert not report.passed
    assert report.distortion == pytest.approx(tau)
    assert "distance not preserved" in report.violation


def test_almost_isometry_needs_a_dense_image():
    Y = circle()
    X = Y.subspace(range(20))
    report = check_almost_isometry(np.arange(20), X, Y, 0.5)
    assert not report.passed
    assert report.distortion == 0.0
    assert report.onto_gap == pytest.approx(math.pi / 2)
    assert "not within epsilon" in report.violation


# ========== Gromov-Hausdorff ==========

def test_correspondence_must_cover_both_spaces():
    X = circle(4)
    with pytest.raises(DomainError):
        Correspondence.from_pairs(X, X, [[0, 0], [1, 1]])
    assert Correspondence.from_pairs(X, X, [[i, i] for i in range(4)]).gh_bound == 0.0


def test_triangle_against_a_segment():
    X = FiniteMetricSpace(("a", "b", "c"), 2.0 * (1 - np.eye(3)))
    Y = FiniteMetricSpace(("0", "1", "2"), [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    assert gh_lower(X, Y) == pytest.approx(0.5, abs=1e-8)
    assert gh_upper(X, Y) == pytest.approx(0.5)


def test_single_point_against_a_space():
    X = FiniteMetricSpace(("o",), [[0.0]])
    Y = circle(8)
    assert gh_upper(X, Y) == pytest.approx(Y.diameter / 2)
    assert gh_lower(X, Y) == pytest.approx(Y.diameter / 2)


def test_two_nets_of_one_disc(plane):
    center = origin(plane.params).coords
    X = epsilon_net_sample(plane, center, 1.0, 0.3, seed=1, prefix="x")
    Y = epsilon_net_sample(plane, center, 1.0, 0.15, seed=2, prefix="y")
    C = plane.pairwise(X.coords, Y.coords)
    hint = np.vstack([np.column_stack([np.arange(X.n), np.argmin(C, axis=1)]),
                      np.column_stack([np.argmin(C, axis=0), np.arange(Y.n)])])
    upper = gh_upper(X, Y, effort=4, hints=[hint])
    assert upper <= 0.3 + 1e-9
    assert gh_lower(X, Y) <= upper


def test_correspondence_search_is_deterministic():
    X, Y = circle(12), circle(10, scale=1.05)
    a = gh_correspondence(X, Y, effort=4, seed=7)
    b = gh_correspondence(X, Y, effort=4, seed=7, threads=3)
    assert np.array_equal(a.pairs, b.pairs)
    assert a.distortion == b.distortion


def test_relabeled_copy_is_at_distance_zero():
    rng = np.random.default_rng(11)
    X = scatter(30, rng)
    Y = X.relabel(rng.permutation(30))
    assert gh_upper(X, Y, effort=2) <= 1e-6


def test_large_spaces_use_the_search():
    X, Y = circle(200), circle(210, scale=1.05)
    upper = gh_upper(X, Y, effort=1)
    assert math.isfinite(upper)
    assert abs(X.diameter - Y.diameter) / 2 <= upper <= Y.diameter / 2
