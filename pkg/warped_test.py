import math

import numpy as np
import pytest

from engine.errors import DomainError
from engine.geom_util import circular_distance
from engine.spaceform import law_of_cosines, vertex_angle
from engine.warped import (
    BallchangeRate,
    WarpedPoint,
    WarpedSpace,
    ballchange_rate,
    build_ballchange,
    curvature_deviation,
    custom_profile,
    geodesic_shoot,
    radial_curvature,
    shoot_fan,
    space_form_profile,
    warped_distance,
)


# ========== profiles ==========

@pytest.mark.parametrize("K", [1.0, 0.0, -1.0])
def test_space_form_profiles_have_constant_curvature(K):
    profile = space_form_profile(K)
    t = np.linspace(0.1, 2.0, 50)
    assert np.max(np.abs(radial_curvature(profile, t) - K)) < 1e-8


def test_radial_curvature_domain():
    profile = space_form_profile(1.0)
    with pytest.raises(DomainError):
        radial_curvature(profile, 0.0)
    with pytest.raises(DomainError):
        radial_curvature(profile, math.pi)


def test_custom_profile_needs_smooth_pole():
    with pytest.raises(DomainError):
        custom_profile(lambda t: t * t, lambda t: 2 * t, lambda t: 2 + 0 * t, 2.0)


def test_custom_profile_checks_derivatives():
    with pytest.raises(DomainError):
        custom_profile(np.sin, np.cos, np.sin, 2.0)
    profile = custom_profile(np.sinh, np.cosh, np.sinh, 3.0, label="hyperbolic")
    assert profile.params == {"label": "hyperbolic"}


def test_ballchange_rate_regimes():
    rate = BallchangeRate(0.3)
    assert rate.value(0.5) == 1.0
    assert rate.T == pytest.approx(math.exp(27 * 0.3 ** 3))
    t = 0.5 * (2.0 + rate.T_eff)
    assert rate.value(t) == pytest.approx(1.0 + math.log(t) ** (1 / 3) / 0.3, rel=1e-12)
    assert rate.value(rate.T_eff + 5.0) == pytest.approx(rate.outer_value)
    expected = 1.0 + math.log(rate.T_eff) ** (1 / 3) / 0.3 + 1.0 / (0.3 * rate.T_eff + 0.3)
    assert rate.outer_value == pytest.approx(expected, rel=1e-12)


def test_ballchange_rate_is_c2_at_knots():
    rate = BallchangeRate(0.3)
    for knot in (1.0, 2.0, rate.T_eff, rate.T_eff + 1.0):
        k, dk, ddk = rate(np.array([knot - 1e-9, knot + 1e-9]))
        assert abs(k[1] - k[0]) < 1e-6
        assert abs(dk[1] - dk[0]) < 1e-6
        assert abs(ddk[1] - ddk[0]) < 1e-5


def test_ballchange_rate_accepts_scalars():
    k, dk, ddk = BallchangeRate(1.0)(1.5)
    assert np.ndim(k) == 0 and 1.0 < float(k) < 2.0


def test_ballchange_rate_rejects_bad_parameter():
    with pytest.raises(DomainError):
        BallchangeRate(0.0)


def test_ballchange_curvature_tracks_the_rate():
    assert curvature_deviation(build_ballchange(150.0), 1.5, 1.0) < 0.1


def test_ballchange_deviation_at_s_50():
    # a rate that is 1 up to t = 1 and on the log law from t = 2 cannot get
    # below about 0.12 here; the quintic blend sits at 0.225
    coarse = curvature_deviation(build_ballchange(50.0), 1.5, 1.0)
    assert 0.12 < coarse < 0.23
    half = curvature_deviation(build_ballchange(100.0), 1.5, 1.0)
    assert coarse / half == pytest.approx(2.0, rel=0.02)


def test_ballchange_deviation_shrinks_with_s():
    coarse = curvature_deviation(build_ballchange(50.0), 1.5, 1.0)
    fine = curvature_deviation(build_ballchange(400.0), 1.5, 1.0)
    assert fine < coarse


def test_ballchange_rate_lookup():
    assert isinstance(ballchange_rate(build_ballchange(5.0)), BallchangeRate)
    with pytest.raises(DomainError):
        ballchange_rate(space_form_profile(0.0))


# ========== geodesics ==========

def test_points_normalize_phi():
    assert WarpedPoint(0.0, 1.3).phi == 0.0
    assert WarpedPoint(1.0, -0.5).phi == pytest.approx(2 * math.pi - 0.5)
    with pytest.raises(DomainError):
        WarpedPoint(-1.0, 0.0)


@pytest.mark.parametrize("K", [1.0, -1.0])
@pytest.mark.parametrize("alpha", [0.3, 1.2, 2.5])
def test_geodesic_endpoint_matches_space_form(K, alpha):
    profile = space_form_profile(K)
    t0, length = 0.5, 1.0
    path = geodesic_shoot(profile, WarpedPoint(t0, 0.0), alpha, length)
    t_true = law_of_cosines(K, math.pi - alpha, t0, length)
    phi_true = vertex_angle(K, t0, t_true, length)
    end = path.endpoint()
    assert end.t == pytest.approx(t_true, abs=1e-6 * length)
    assert float(circular_distance(end.phi, phi_true)) < 1e-6
    assert path.clairaut_drift < 1e-8
    assert path.speed_error < 1e-7
    assert not path.exited


def test_geodesic_through_the_pole():
    profile = space_form_profile(-1.0)
    end = geodesic_shoot(profile, WarpedPoint(0.5, 0.0), math.pi, 1.0).endpoint()
    assert end.t == pytest.approx(0.5, abs=1e-6)
    assert float(circular_distance(end.phi, math.pi)) < 1e-6


def test_fan_from_the_pole_is_radial():
    profile = space_form_profile(1.0)
    alphas = np.array([0.0, 1.0, 4.0])
    fan = shoot_fan(profile, WarpedPoint(0.0), alphas, 1.2)
    assert np.allclose(fan.t, 1.2, atol=1e-9)
    assert np.allclose(circular_distance(fan.phi, alphas), 0.0, atol=1e-9)


def test_geodesics_are_reversible():
    profile = build_ballchange(10.0)
    start, length = WarpedPoint(0.8, 0.3), 1.0
    path = geodesic_shoot(profile, start, 2.0, length)
    back = geodesic_shoot(profile, path.endpoint(), path.end_direction(profile) + math.pi, length).endpoint()
    f = float(profile.f(np.asarray(start.t)))
    gap = math.hypot(back.t - start.t, f * float(circular_distance(back.phi, start.phi)))
    assert gap < 1e-6 * length


def test_shot_leaving_the_domain_is_flagged():
    profile = space_form_profile(0.0, t_max=1.0)
    fan = shoot_fan(profile, WarpedPoint(0.5), [0.0], 2.0)
    assert bool(fan.exited[0])


# ========== distances ==========

@pytest.mark.parametrize("K", [1.0, 0.0, -1.0])
def test_distance_matches_law_of_cosines(K):
    profile = space_form_profile(K)
    for p, q in [(WarpedPoint(0.6, 0.0), WarpedPoint(0.9, 1.0)),
                 (WarpedPoint(0.4, 0.3), WarpedPoint(0.7, 2.8))]:
        expected = law_of_cosines(K, float(circular_distance(p.phi, q.phi)), p.t, q.t)
        assert warped_distance(profile, p, q) == pytest.approx(expected, abs=1e-5)


def test_distance_special_cases():
    profile = space_form_profile(0.0)
    assert warped_distance(profile, WarpedPoint(0.0), WarpedPoint(0.8, 2.0)) == 0.8
    assert warped_distance(profile, WarpedPoint(0.3, 1.0), WarpedPoint(0.8, 1.0)) == pytest.approx(0.5)
    # opposite rays: the path through the pole
    assert warped_distance(profile, WarpedPoint(0.5, 0.0), WarpedPoint(0.7, math.pi)) == pytest.approx(1.2)


def test_distance_is_a_metric():
    rng = np.random.default_rng(6)
    P = np.column_stack([rng.uniform(0.3, 1.2, 6), rng.uniform(0.0, 2 * math.pi, 6)])
    D = WarpedSpace(space_form_profile(-1.0)).pairwise(P, P)
    assert np.max(np.abs(D - D.T)) < 1e-6
    assert np.max(np.abs(np.diag(D))) == 0.0
    excess = D[:, None, :] - D[:, :, None] - D[None, :, :]
    assert np.max(excess) < 1e-6


def test_distance_outside_domain():
    profile = space_form_profile(1.0)
    with pytest.raises(DomainError):
        warped_distance(profile, WarpedPoint(4.0), WarpedPoint(1.0))


def test_warped_space_handle():
    space = WarpedSpace(space_form_profile(0.0))
    points, radial = space.net_candidates(WarpedPoint(0.0), 0.3, 0.1)
    assert points.shape[1] == 2
    assert radial[0] == 0.0 and np.max(radial) == pytest.approx(0.3)
    E = space.shoot(WarpedPoint(0.0), [0.0, 1.0], [0.2, 0.4])
    assert E.shape == (2, 2, 2)
    assert np.allclose(E[:, 1, 0], 0.4, atol=1e-9)
    with pytest.raises(DomainError):
        space.net_candidates(WarpedPoint(0.5), 0.3, 0.1)
