import math

import numpy as np
import pytest

from engine.errors import DisconnectedWedgeError, DomainError
from engine.metricspace import FiniteMetricSpace, epsilon_net_sample, packing_number
from engine.neck import build_glued, glued_paired, glued_pairwise
from engine.spaceform import SpaceFormParams
from engine.wedge import (
    WedgeSpace,
    convergence_experiment,
    isotropy_convergence,
    pairing_wedge,
    ricci_violation,
    two_point_wedge,
    wedge_distance,
)


# ========== wedge metric ==========

def test_two_point_wedge_distances():
    Y = two_point_wedge(0.0, 0.0)
    assert wedge_distance(Y, (1, 1.0, 0.0), (2, 1.0, 0.0)) == pytest.approx(2.0)
    assert wedge_distance(Y, (1, 0.5, 0.0), (2, 0.7, 1.0)) == pytest.approx(1.2)
    assert wedge_distance(Y, (1, 1.0, 0.0), (1, 1.0, math.pi / 2)) == pytest.approx(math.sqrt(2.0))


def test_curved_components():
    Y = two_point_wedge(1.0, -1.0)
    assert wedge_distance(Y, (1, 1.0, 0.3), (2, 2.0, 2.0)) == pytest.approx(3.0)


def test_self_junction_shortcut():
    Y = pairing_wedge([0.0], [((1, 1.0, 0.0), (1, 1.0, math.pi))])
    assert wedge_distance(Y, (1, 1.2, 0.0), (1, 1.2, math.pi)) == pytest.approx(0.4)
    assert wedge_distance(Y, (1, 0.0, 0.0), (1, 1.0, math.pi)) == pytest.approx(1.0)


def test_hops_chain_components():
    Y = pairing_wedge([0.0, 0.0, 0.0], [((1, 0.0, 0.0), (2, 0.0, 0.0)),
                                        ((2, 1.0, 0.0), (3, 0.0, 0.0))])
    assert Y.hops[0, 1] == pytest.approx(1.0)
    assert wedge_distance(Y, (1, 0.5, 0.0), (3, 0.5, 0.0)) == pytest.approx(2.0)


def test_many_junctions_use_shortest_paths():
    pairing = [((k, 1.0, 0.0), (k + 1, 0.0, 0.0)) for k in range(1, 8)]
    Y = pairing_wedge([0.0] * 8, pairing)
    assert len(Y.junctions) == 7
    assert wedge_distance(Y, (1, 0.0, 0.0), (8, 1.0, 0.0)) == pytest.approx(8.0)
    assert Y.hops[0, 6] == pytest.approx(6.0)


def test_rejects_disconnected_wedges():
    with pytest.raises(DisconnectedWedgeError):
        pairing_wedge([0.0, 0.0, 0.0], [((1, 0.0, 0.0), (2, 0.0, 0.0))])


def test_rejects_bad_junctions():
    with pytest.raises(DomainError):
        pairing_wedge([0.0], [((1, 1.0, 0.5), (1, 1.0, 0.5))])
    with pytest.raises(DomainError):
        pairing_wedge([0.0, 0.0], [((1, 0.0, 0.0), (3, 0.0, 0.0))])
    with pytest.raises(DomainError):
        pairing_wedge([1.0, 0.0], [((1, 4.0, 0.0), (2, 0.0, 0.0))])


def test_junction_separation():
    pairing = [((1, 1.0, 0.0), (2, 0.0, 0.0)), ((1, 1.0, 0.1), (2, 1.0, 0.0))]
    with pytest.raises(DomainError) as err:
        pairing_wedge([0.0, 0.0], pairing, min_separation=0.2)
    assert err.value.bound.startswith("d >= 2 R")
    assert len(pairing_wedge([0.0, 0.0], pairing, min_separation=0.01).junctions) == 2


def test_rejects_foreign_points():
    Y = two_point_wedge(0.0, 0.0)
    with pytest.raises(DomainError):
        Y.pairwise([[3.0, 1.0, 0.0]], [[1.0, 1.0, 0.0]])
    with pytest.raises(DomainError):
        WedgeSpace([SpaceFormParams(0.0, 3)], [])


def test_net_of_the_wedge_spans_both_components():
    Y = two_point_wedge(0.0, 1.0)
    X = epsilon_net_sample(Y, np.array([1.0, 0.0, 0.0]), 0.5, 0.2)
    comps = X.coords[:, 0]
    assert set(np.unique(comps)) == {1.0, 2.0}
    i = int(np.nonzero(comps == 1.0)[0][-1])
    j = int(np.nonzero(comps == 2.0)[0][-1])
    assert X.D[i, j] == pytest.approx(X.coords[i, 1] + X.coords[j, 1])


# ========== volume comparison ==========

def test_flat_volume_comparison_is_violated():
    frame = ricci_violation(2, 0.0, 0.0, 0.0, [0.1, 0.01])
    assert frame["lhs"].tolist() == pytest.approx([8.0, 8.0])
    assert frame["rhs"].tolist() == pytest.approx([9.0, 9.0])
    assert (frame["verdict"] == "VIOLATED").all()
    assert frame["lhs_limit"].tolist() == [8, 8]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_limits_are_approached(n):
    frame = ricci_violation(n, 1.0, -1.0, -1.0, [0.001])
    row = frame.iloc[0]
    assert row["lhs"] == pytest.approx(3 ** n - 1, rel=1e-3)
    assert row["rhs"] == pytest.approx(3 ** n, rel=1e-3)
    assert row["verdict"] == "VIOLATED"


def test_comparison_curvature_bound():
    with pytest.raises(DomainError):
        ricci_violation(2, 0.0, -1.0, 0.0, [0.1])


# ========== glued manifolds against the wedge ==========

def test_isotropy_away_from_the_neck():
    frame = isotropy_convergence(0.0, 0.0, [0.1, 0.05], 1.0, n_dirs=12)
    assert list(frame["r"]) == [0.1, 0.05]
    assert (frame["max_deviation"] < 1e-7).all()
    assert (frame["max_deviation_ray_only"] >= frame["max_deviation"] - 1e-12).all()
    assert (frame["cap_error"] <= 2 * math.pi / 720).all()
    assert frame["cap_radius"].iloc[1] < frame["cap_radius"].iloc[0]


def test_isotropy_convergence_preconditions():
    with pytest.raises(DomainError):
        isotropy_convergence(0.0, 0.0, [0.1, 0.2], 1.0)
    with pytest.raises(DomainError):
        isotropy_convergence(0.0, 0.0, [0.1], 0.05)


def test_ghdist_to_the_wedge_shrinks():
    frame = convergence_experiment(0.0, 0.0, [0.2, 0.05], 0.5, 0.15, effort=2)
    assert frame["gh_upper"].notna().all()
    assert (frame["gh_lower"] <= frame["gh_upper"] + 1e-12).all()
    assert frame["gh_upper"].iloc[-1] <= 0.3
    assert frame["m"].tolist() == pytest.approx([0.01, 0.000625])
    assert frame["neck_diameter_upper"].iloc[1] < frame["neck_diameter_upper"].iloc[0]
    assert (frame["n_Y"] == frame["n_Y"].iloc[0]).all()


def test_ghdist_to_the_wedge_at_unit_radius():
    frame = convergence_experiment(0.0, 0.0, [0.2, 0.1, 0.05], 1.0, 0.05, effort=2)
    upper = frame["gh_upper"].tolist()
    assert frame["gh_upper"].notna().all()
    assert (frame["gh_lower"] <= frame["gh_upper"] + 1e-12).all()
    assert all(b <= a + 1e-9 for a, b in zip(upper, upper[1:]))
    assert upper[-1] <= 0.3


def test_glued_distances_approach_the_wedge():
    rng = np.random.default_rng(8)
    n = 20
    P = np.column_stack([rng.integers(1, 3, n).astype(float), rng.uniform(0.4, 1.0, n),
                         rng.uniform(0.0, 2 * math.pi, n)])
    Q = np.column_stack([rng.integers(1, 3, n).astype(float), rng.uniform(0.4, 1.0, n),
                         rng.uniform(0.0, 2 * math.pi, n)])
    Y = two_point_wedge(0.0, 0.0)
    limit = np.diag(Y.pairwise(P, Q))
    errors = np.array([np.abs(glued_paired(build_glued(0.0, 0.0, r), P, Q) - limit) for r in (0.2, 0.1, 0.05)])
    assert np.all(np.diff(errors, axis=0) <= 1e-9)
    assert np.max(errors[-1]) < 0.05


def test_packing_is_uniform_along_the_family():
    # a ring of ten points about p_1 holding the centre, and five points on
    # the far side of the neck; every pair is more than 0.2 apart
    ring = np.column_stack([np.ones(10), np.full(10, 0.4), np.arange(10) * (2 * math.pi / 10)])
    far = np.column_stack([np.full(5, 2.0), np.full(5, 0.2), np.arange(5) * (2 * math.pi / 5)])
    P = np.vstack([ring, far])
    counts = []
    for r in (0.2, 0.1, 0.05):
        D = glued_pairwise(build_glued(0.0, 0.0, r), P, P)
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
        X = FiniteMetricSpace(tuple(f"x{k}" for k in range(len(P))), D, P, triangle_tol=r / 4.0)
        counts.append(packing_number(X, 0.1, 1.0, 0))
    assert max(counts) - min(counts) <= 1
    assert min(counts) >= 14
