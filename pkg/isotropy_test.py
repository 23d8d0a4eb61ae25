import math

import numpy as np
import pytest

from engine.errors import DomainError, InsufficientDirectionsError
from engine.geom_util import circular_distance
from engine.isotropy import (
    Ball,
    BadDirectionSet,
    bad_directions,
    cross_point_spread,
    est2_epsilon_bound,
    est2_predicate,
    estimate_F,
    unseen_check,
    verify_axioms,
)
from engine.metricspace import PackingTable
from engine.spaceform import SpaceFormParams, SpaceFormSpace, law_of_cosines, origin, random_point


def space(K):
    return SpaceFormSpace(SpaceFormParams(K, 2))


@pytest.fixture(scope="module")
def flat_estimate():
    plane = space(0.0)
    return estimate_F(plane, origin(plane.params).coords, 1.0, n_dirs=24)


# ========== estimates ==========

@pytest.mark.parametrize("K", [1.0, 0.0, -1.0])
def test_estimate_recovers_the_law_of_cosines(K):
    S = space(K)
    est = estimate_F(S, origin(S.params).coords, 1.0, n_dirs=24, seed=2)
    assert est.deviation_from(lambda th, s, t: law_of_cosines(K, th, s, t)) < 1e-10
    assert est.defect < 1e-10
    assert est.radial_error < 1e-12
    assert verify_axioms(est, 1.0).passed


def test_estimate_frame(flat_estimate):
    frame = flat_estimate.to_frame()
    assert list(frame.columns) == ["theta", "s", "t", "F_hat", "spread", "n_samples"]
    assert len(frame) == 17 * 4 * 4
    assert (frame["n_samples"] == 24).all()
    assert flat_estimate.to_csv().startswith("theta,s,t,F_hat,spread,n_samples\n")


def test_diagonal(flat_estimate):
    diag = flat_estimate.diagonal(math.pi)
    assert diag == pytest.approx(2.0 * flat_estimate.radii_grid)


def test_bases_agree_on_a_space_form():
    S = space(1.0)
    rng = np.random.default_rng(1)
    estimates = [estimate_F(S, origin(S.params).coords, 1.0, n_dirs=12)]
    estimates += [estimate_F(S, random_point(S.params, rng).coords, 1.0, n_dirs=12) for _ in range(2)]
    assert cross_point_spread(estimates) < 1e-10
    assert cross_point_spread(estimates[:1]) == 0.0


def test_estimate_rejects_bad_radii():
    S = space(1.0)
    base = origin(S.params).coords
    with pytest.raises(DomainError):
        estimate_F(S, base, 4.0)
    with pytest.raises(DomainError):
        estimate_F(S, base, 1.0, radii_grid=[0.5, 1.5])


def test_all_directions_bad():
    plane = space(0.0)
    bad = BadDirectionSet(np.ones(1440, dtype=bool))
    with pytest.raises(InsufficientDirectionsError):
        estimate_F(plane, origin(plane.params).coords, 1.0, bad=bad)


def test_pair_filter_drops_pairs_through_the_ball():
    plane = space(0.0)
    base = origin(plane.params).coords
    W = [Ball(np.array([0.0, 0.0]), 0.3)]
    est = estimate_F(plane, base, 1.0, n_dirs=24, W=W, pair_filter=True)
    # every chord at theta = pi passes through the base point
    assert np.all(est.samples_per_cell[-1] == 0)
    assert est.pair_filter


# ========== axioms ==========

def test_axioms_flag_a_drop():
    plane = space(0.0)
    est = estimate_F(plane, origin(plane.params).coords, 1.0, n_dirs=24)
    est.F_hat[8, 3, 3] += 1.0
    report = verify_axioms(est, 1.0)
    assert not report.passed
    assert report.checks["monotone"] is False
    assert any(check == "monotone" for check, _, _ in report.violations)
    assert list(report.to_frame().columns) == ["check", "passed"]


def test_axioms_check_the_radius(flat_estimate):
    report = verify_axioms(flat_estimate, 2.0)
    assert report.checks["radial"] is False
    assert report.checks["monotone"] is True


# ========== bad directions ==========

def test_caps_wrap_around():
    S = BadDirectionSet.from_caps([(0.0, 0.1)])
    assert S.runs() == [(1418, 45)]
    assert bool(S.contains(2 * math.pi - 0.05))
    assert not bool(S.contains(math.pi))
    assert BadDirectionSet.empty().runs() == []


def test_bad_directions_toward_a_ball():
    plane = space(0.0)
    S = bad_directions(plane, origin(plane.params).coords, [Ball(np.array([1.0, 0.0]), 0.2)], 2.0)
    half_width = math.asin(0.2)
    assert bool(S.contains(0.0))
    assert not bool(S.contains(math.pi))
    assert S.fraction == pytest.approx(2 * half_width / (2 * math.pi), abs=2.0 / S.grid_size)


def test_unseen_caps_shrink_with_the_ball():
    plane = space(0.0)
    S = bad_directions(plane, origin(plane.params).coords, [Ball(np.array([1.0, 0.0]), 0.2)], 2.0)
    assert unseen_check(S, 0.25).passed
    result = unseen_check(S, 0.15)
    assert not result.passed
    assert "not below epsilon" in result.violation


@pytest.mark.parametrize("factor, distance, expected", [(0.9, 1.0, True), (1.5, 0.065, False)])
def test_unseen_against_the_packing_radius(factor, distance, expected):
    eps = 0.2
    rho = factor * law_of_cosines(0.0, eps, eps, eps)
    plane = space(0.0)
    W = [Ball(np.array([distance, 0.0]), rho)]
    S = bad_directions(plane, origin(plane.params).coords, W, 2 * distance)
    assert unseen_check(S, eps).passed is expected


def test_neighbouring_caps_merge():
    S = BadDirectionSet.from_caps([(1.0, 0.02), (1.1, 0.02)])
    result = unseen_check(S, 0.2)
    assert result.passed
    assert len(result.cover.caps) == 1
    assert result.cover.caps[0].radius == pytest.approx(0.07, abs=0.01)


def test_caps_merge_across_zero():
    S = BadDirectionSet.from_caps([(0.03, 0.015), (6.26, 0.015)])
    result = unseen_check(S, 0.1)
    assert result.passed
    assert len(result.cover.caps) == 1
    cap = result.cover.caps[0]
    assert cap.radius == pytest.approx(0.042, abs=0.01)
    assert bool(circular_distance(cap.center, 0.0) < 0.02)


def test_separate_caps_stay_apart():
    S = BadDirectionSet.from_caps([(1.0, 0.02), (4.0, 0.02)])
    result = unseen_check(S, 0.2)
    assert result.passed
    assert len(result.cover.caps) == 2
    assert result.cover.tripled_disjoint()
    assert unseen_check(BadDirectionSet.empty(), 0.2).passed


# ========== packing threshold ==========

def test_est2_threshold(flat_estimate):
    table = PackingTable(np.array([0.05]), np.array([1.5]), np.array([[3]]), np.array([[3]]))
    loose = est2_predicate(flat_estimate, table, 1.0, 0.5)
    assert loose.passed
    assert loose.theta_bound == pytest.approx(math.pi / 6)
    assert loose.worst == pytest.approx(2.0 * math.sin(math.pi / 16))
    tight = est2_predicate(flat_estimate, table, 1.0, 0.1)
    assert not tight.passed
    assert est2_epsilon_bound(table, 1.0, 0.1) == pytest.approx(0.05)
    assert est2_predicate(flat_estimate, table.scaled(0.5), 1.0, 0.5).theta_bound == pytest.approx(math.pi / 2)
