"""
warped - surfaces of revolution g = dt^2 + f(t)^2 dphi^2

Warp profiles, radial sectional curvature, geodesic shooting and shooting
distances, and the ballchange family f(t) = sinh(K_s(t) t).

Geodesics are integrated in the Cartesian chart u = t cos(phi),
v = t sin(phi), where the metric is the flat one plus (f^2 - t^2) dphi^2.
The Hamiltonian there is H = |p|^2/2 - mu(t) c^2/2 with
mu = 1/t^2 - 1/f^2 and c = u p_v - v p_u (the Clairaut constant), which is
smooth through the pole.

Usage:
    from engine.warped import build_ballchange, geodesic_shoot, WarpedPoint
    profile = build_ballchange(10.0)
    path = geodesic_shoot(profile, WarpedPoint(0.5, 0.0), math.pi / 3, 1.0)
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from engine.errors import BlendBoundError, DomainError, NonConvergenceError
from engine.geom_util import TWO_PI, circular_distance, eval_quintic, quintic_hermite
from engine.spaceform import warp_factor_derivatives

logger = logging.getLogger(__name__)

MAX_STEP = 1e-3
POLE_FLOOR = 1e-3
DEFAULT_T_MAX = 50.0
SINH_LIMIT = 700.0
FAN_SIZE = 64
REFINE_ROUNDS = 3


class ProfileKind(Enum):
    SPACE_FORM = "space_form"
    BALLCHANGE = "ballchange"
    CUSTOM = "custom"


# ========== ballchange rate K_s ==========

@dataclass(frozen=True)
class BallchangeRate:
    """K_s(t): 1 on [0,1], 1 + ln(t)^(1/3)/s on [2, T], constant
    4 + 1/(sT + s) beyond T + 1, with C^2 quintic blends in between
    (T = exp(27 s^3))."""
    s: float
    T: float = field(init=False)
    T_eff: float = field(init=False)
    outer_value: float = field(init=False)
    inner_coeffs: np.ndarray = field(init=False, repr=False)
    outer_coeffs: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise DomainError(f"ballchange parameter must be positive, got {self.s!r}", bound="s > 0")
        exponent = 27.0 * self.s ** 3
        T = math.exp(exponent) if exponent < 700.0 else math.inf
        T_eff = max(T, 2.0)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "T_eff", T_eff)
        object.__setattr__(self, "inner_coeffs",
                           quintic_hermite(1.0, 2.0, (1.0, 0.0, 0.0), self._log_regime(2.0)))
        outer = None
        outer_value = math.inf
        if T_eff + 1.0 > T_eff and math.isfinite(T_eff):
            left = self._log_regime(T_eff)
            outer_value = left[0] + 1.0 / (self.s * T_eff + self.s)
            outer = quintic_hermite(T_eff, T_eff + 1.0, left, (outer_value, 0.0, 0.0))
        object.__setattr__(self, "outer_value", outer_value)
        object.__setattr__(self, "outer_coeffs", outer)
        self._check_blend_bounds()

    def _log_regime(self, t):
        """K, K', K'' of 1 + ln(t)^(1/3)/s for t >= 2."""
        t = np.asarray(t, dtype=float)
        lt = np.log(t)
        k = 1.0 + np.cbrt(lt) / self.s
        dk = (1.0 / (3.0 * self.s)) * lt ** (-2.0 / 3.0) / t
        ddk = -(1.0 / (3.0 * self.s * t * t)) * lt ** (-2.0 / 3.0) * ((2.0 / 3.0) / lt + 1.0)
        if k.ndim == 0:
            return float(k), float(dk), float(ddk)
        return k, dk, ddk

    def _check_blend_bounds(self):
        grid = np.linspace(1.0, 2.0, 10001)
        _, dk, ddk = eval_quintic(self.inner_coeffs, 1.0, 2.0, grid)
        bound = 5.0 / self.s
        worst = max(float(np.max(np.abs(dk))), float(np.max(np.abs(ddk))))
        if worst > bound * (1 + 1e-12):
            raise BlendBoundError(f"inner blend derivative {worst:.6g} exceeds 5/s = {bound:.6g}")
        if self.outer_coeffs is not None and self.T_eff < 1e6:
            grid = np.linspace(self.T_eff, self.T_eff + 1.0, 10001)
            _, dk, ddk = eval_quintic(self.outer_coeffs, self.T_eff, self.T_eff + 1.0, grid)
            bound = 5.0 / (self.s * self.T_eff + self.s)
            worst = max(float(np.max(np.abs(dk))), float(np.max(np.abs(ddk))))
            if worst > bound * (1 + 1e-12):
                logger.warning(f"⚠ outer blend derivative {worst:.3g} exceeds 5/(sT+s) = {bound:.3g}")

    def __call__(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        shape = t.shape
        t = np.atleast_1d(t)
        k = np.ones_like(t)
        dk = np.zeros_like(t)
        ddk = np.zeros_like(t)

        inner = (t > 1.0) & (t < 2.0)
        if np.any(inner):
            k[inner], dk[inner], ddk[inner] = eval_quintic(self.inner_coeffs, 1.0, 2.0, t[inner])

        log_part = (t >= 2.0) & (t <= self.T_eff)
        if np.any(log_part):
            k[log_part], dk[log_part], ddk[log_part] = self._log_regime(t[log_part])

        if self.outer_coeffs is not None:
            blend = (t > self.T_eff) & (t < self.T_eff + 1.0)
            if np.any(blend):
                k[blend], dk[blend], ddk[blend] = eval_quintic(
                    self.outer_coeffs, self.T_eff, self.T_eff + 1.0, t[blend])
            k[t >= self.T_eff + 1.0] = self.outer_value
        return k.reshape(shape), dk.reshape(shape), ddk.reshape(shape)

    def value(self, t) -> float:
        return float(self(np.asarray([t], dtype=float))[0][0])


# ========== profiles ==========

@dataclass(frozen=True)
class WarpProfile:
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    ddf: Callable[[np.ndarray], np.ndarray]
    t_max: float
    kind: ProfileKind = ProfileKind.CUSTOM
    params: Dict[str, Any] = field(default_factory=dict)
    rate: Optional[BallchangeRate] = None
    knots: Tuple[float, ...] = ()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Smooth pole, positivity, and derivative consistency on a test grid."""
        if not self.t_max > 0:
            raise DomainError("profile domain must be non-empty", bound="t_max > 0")
        f0 = float(self.f(np.asarray(0.0)))
        df0 = float(self.df(np.asarray(0.0)))
        if abs(f0) > 1e-12 or abs(df0 - 1.0) > 1e-9:
            raise DomainError(f"profile has no smooth pole: f(0)={f0!r}, f'(0)={df0!r}",
                              bound="f(0) = 0, f'(0) = 1")
        grid = self.t_max * (np.arange(400) + 0.5) / 400.0
        for k in self.knots:
            grid = grid[np.abs(grid - k) > 1e-3]
        fv = self.f(grid)
        if np.any(fv <= 0):
            raise DomainError("warp factor must be positive inside the domain", bound="f(t) > 0")
        h = 1e-5 * np.maximum(1.0, grid)
        inside = (grid - h > 0) & (grid + h < self.t_max)
        g, hh = grid[inside], h[inside]
        cd1 = (self.f(g + hh) - self.f(g - hh)) / (2 * hh)
        cd2 = (self.df(g + hh) - self.df(g - hh)) / (2 * hh)
        d1, d2 = self.df(g), self.ddf(g)
        scale1 = np.maximum(np.abs(d1), np.abs(self.f(g)))
        scale2 = np.maximum(np.abs(d2), scale1)
        if np.any(np.abs(cd1 - d1) > 1e-6 * np.maximum(scale1, 1.0)):
            raise DomainError("f' is inconsistent with f on the test grid")
        if np.any(np.abs(cd2 - d2) > 1e-6 * np.maximum(scale2, 1.0)):
            raise DomainError("f'' is inconsistent with f' on the test grid")


def space_form_profile(K: float, t_max: Optional[float] = None) -> WarpProfile:
    """Polar-coordinate profile of the constant-curvature surface."""
    if K > 0:
        limit = math.pi / math.sqrt(K)
        t_max = limit if t_max is None else min(t_max, limit)
    elif t_max is None:
        t_max = DEFAULT_T_MAX if K == 0 else min(DEFAULT_T_MAX, SINH_LIMIT / math.sqrt(-K))
    return WarpProfile(
        f=lambda t: warp_factor_derivatives(K, t)[0],
        df=lambda t: warp_factor_derivatives(K, t)[1],
        ddf=lambda t: warp_factor_derivatives(K, t)[2],
        t_max=float(t_max),
        kind=ProfileKind.SPACE_FORM,
        params={"K": K},
    )


def custom_profile(f, df, ddf, t_max: float, **params) -> WarpProfile:
    return WarpProfile(f=f, df=df, ddf=ddf, t_max=float(t_max), kind=ProfileKind.CUSTOM, params=params)


def build_ballchange(s: float, t_max: float = DEFAULT_T_MAX) -> WarpProfile:
    """f(t) = sinh(K_s(t) t) with the piecewise rate K_s."""
    rate = BallchangeRate(float(s))
    k_peak = float(np.max(rate(np.linspace(0.0, t_max, 2001))[0]))
    t_max = min(t_max, SINH_LIMIT / k_peak)

    def f(t):
        k, _, _ = rate(t)
        return np.sinh(k * np.asarray(t, dtype=float))

    def df(t):
        t = np.asarray(t, dtype=float)
        k, dk, _ = rate(t)
        return np.cosh(k * t) * (dk * t + k)

    def ddf(t):
        t = np.asarray(t, dtype=float)
        k, dk, ddk = rate(t)
        return np.sinh(k * t) * (dk * t + k) ** 2 + np.cosh(k * t) * (ddk * t + 2 * dk)

    knots = tuple(x for x in (1.0, 2.0, rate.T_eff, rate.T_eff + 1.0) if x < t_max)
    return WarpProfile(f=f, df=df, ddf=ddf, t_max=t_max, kind=ProfileKind.BALLCHANGE,
                       params={"s": float(s), "T": rate.T}, rate=rate, knots=knots)


def radial_curvature(profile: WarpProfile, t):
    """Sectional curvature -f''(t)/f(t) of the plane spanned by d/dt and the fibre."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr <= 0) or np.any(arr >= profile.t_max):
        raise DomainError("radial curvature is defined on the open interval (0, t_max)",
                          bound=f"0 < t < {profile.t_max!r}")
    out = -profile.ddf(arr) / profile.f(arr)
    return float(out) if out.ndim == 0 else out


def ballchange_rate(profile: WarpProfile) -> BallchangeRate:
    if profile.rate is None:
        raise DomainError("profile is not a member of the ballchange family")
    return profile.rate


def curvature_deviation(profile: WarpProfile, r: float, R: float, samples: int = 2001) -> float:
    """max |Sect(t) + K_s(r)^2| over |t - r| < R inside the domain."""
    k_r = ballchange_rate(profile).value(r)
    lo = max(r - R, 0.0)
    hi = min(r + R, profile.t_max)
    grid = np.linspace(lo, hi, samples + 2)[1:-1]
    return float(np.max(np.abs(radial_curvature(profile, grid) + k_r ** 2)))


# ========== points and paths ==========

@dataclass(frozen=True)
class WarpedPoint:
    t: float
    phi: float = 0.0

    def __post_init__(self):
        if not self.t >= 0:
            raise DomainError(f"radial coordinate must be non-negative, got {self.t!r}")
        object.__setattr__(self, "phi", 0.0 if self.t == 0 else float(np.mod(self.phi, TWO_PI)))


@dataclass
class GeodesicPath:
    s: np.ndarray
    t: np.ndarray
    phi: np.ndarray
    dt: np.ndarray
    dphi: np.ndarray
    length: float
    clairaut: float
    clairaut_drift: float
    speed_error: float
    exited: bool = False

    def endpoint(self) -> WarpedPoint:
        return WarpedPoint(float(self.t[-1]), float(self.phi[-1]))

    def end_direction(self, profile: WarpProfile) -> float:
        """Angle of the final velocity measured from the outward radial direction."""
        f_end = float(profile.f(np.asarray(self.t[-1])))
        return math.atan2(f_end * float(self.dphi[-1]), float(self.dt[-1]))


def _check_point(profile: WarpProfile, p: WarpedPoint) -> None:
    if p.t > profile.t_max:
        raise DomainError(f"point t={p.t!r} outside the profile domain", bound=f"t <= {profile.t_max!r}")


def _initial_state(profile: WarpProfile, t0: float, phi0: float, alphas) -> np.ndarray:
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    y = np.zeros((alphas.size, 4))
    if t0 == 0:
        y[:, 2] = np.cos(alphas)
        y[:, 3] = np.sin(alphas)
        return y
    f0 = float(profile.f(np.asarray(t0)))
    p_t = np.cos(alphas)
    p_phi = f0 * np.sin(alphas)
    c, s = math.cos(phi0), math.sin(phi0)
    y[:, 0] = t0 * c
    y[:, 1] = t0 * s
    y[:, 2] = c * p_t - s * p_phi / t0
    y[:, 3] = s * p_t + c * p_phi / t0
    return y


def _mu_terms(profile: WarpProfile, t: np.ndarray):
    tt = np.maximum(t, POLE_FLOOR)
    f = profile.f(tt)
    df = profile.df(tt)
    mu = (f - tt) * (f + tt) / (tt * tt * f * f)
    dmu = -2.0 / tt ** 3 + 2.0 * df / f ** 3
    return mu, dmu / tt


def _rhs(profile: WarpProfile, y: np.ndarray) -> np.ndarray:
    u, v, pu, pv = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
    c = u * pv - v * pu
    mu, dmu_t = _mu_terms(profile, np.hypot(u, v))
    out = np.empty_like(y)
    out[:, 0] = pu + mu * c * v
    out[:, 1] = pv - mu * c * u
    out[:, 2] = 0.5 * dmu_t * u * c * c + mu * c * pv
    out[:, 3] = 0.5 * dmu_t * v * c * c - mu * c * pu
    return out


def _integrate(profile: WarpProfile, y0: np.ndarray, length: float, keep: str = "end"):
    """Classical RK4 with step min(1e-3, L/1000).

    keep = "end" returns the final state, "all" every step. Shots that reach
    the edge of the domain are frozen and flagged.
    """
    if length <= 0:
        states = y0[None] if keep == "all" else y0
        return states, np.zeros(len(y0), dtype=bool), 0.0
    n_steps = int(math.ceil(length / min(MAX_STEP, length / 1000.0) - 1e-9))
    h = length / n_steps
    t_edge = profile.t_max * (1 - 1e-9)
    exited = np.zeros(len(y0), dtype=bool)
    y = y0.copy()
    history = [y.copy()] if keep == "all" else None
    for _ in range(n_steps):
        k1 = _rhs(profile, y)
        k2 = _rhs(profile, y + 0.5 * h * k1)
        k3 = _rhs(profile, y + 0.5 * h * k2)
        k4 = _rhs(profile, y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        y = np.where(exited[:, None], y, y_new)
        exited |= np.hypot(y[:, 0], y[:, 1]) >= t_edge
        if history is not None:
            history.append(y.copy())
    return (np.array(history) if history is not None else y), exited, h


def _polar(profile: WarpProfile, y: np.ndarray):
    """(t, phi, dt/ds, dphi/ds, c) for states of shape (..., 4)."""
    u, v, pu, pv = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    t = np.hypot(u, v)
    c = u * pv - v * pu
    safe = np.where(t > 0, t, 1.0)
    dt = np.where(t > 0, (u * pu + v * pv) / safe, np.hypot(pu, pv))
    f = profile.f(np.maximum(t, 1e-300))
    dphi = np.where(t > 0, c / (f * f), 0.0)
    return t, np.mod(np.arctan2(v, u), TWO_PI), dt, dphi, c


def geodesic_shoot(profile: WarpProfile, start: WarpedPoint, direction: float, length: float,
                   samples: int = 201) -> GeodesicPath:
    """Unit-speed geodesic from start; direction is measured from the outward
    radial direction towards increasing phi (at the pole: absolute angle)."""
    if length < 0:
        raise DomainError("geodesic length must be non-negative")
    _check_point(profile, start)
    y0 = _initial_state(profile, start.t, start.phi, [direction])
    states, exited, _ = _integrate(profile, y0, length, keep="all")
    states = states[:, 0, :]
    idx = np.unique(np.linspace(0, len(states) - 1, min(samples, len(states))).round().astype(int))
    t, phi, dt, dphi, c = _polar(profile, states[idx])
    f = profile.f(np.maximum(t, 1e-300))
    speed = np.sqrt(dt * dt + np.where(t > 0, (c / f) ** 2, 0.0))
    c0 = float(c[0])
    steps = max(len(states) - 1, 1)
    if bool(exited[0]):
        logger.warning(f"⚠ geodesic left the profile domain (t_max={profile.t_max:.4g})")
    return GeodesicPath(
        s=idx * (length / steps),
        t=t, phi=phi, dt=dt, dphi=dphi,
        length=float(length),
        clairaut=c0,
        clairaut_drift=float(np.max(np.abs(c - c0)) / max(abs(c0), 1.0)),
        speed_error=float(np.max(np.abs(speed - 1.0))),
        exited=bool(exited[0]),
    )


@dataclass
class FanResult:
    t: np.ndarray
    phi: np.ndarray
    dt: np.ndarray
    dphi: np.ndarray
    exited: np.ndarray


def shoot_fan(profile: WarpProfile, start: WarpedPoint, alphas, length: float) -> FanResult:
    """Endpoints of many geodesics of a common length, integrated together."""
    _check_point(profile, start)
    y0 = _initial_state(profile, start.t, start.phi, alphas)
    y, exited, _ = _integrate(profile, y0, length)
    t, phi, dt, dphi, _ = _polar(profile, y)
    return FanResult(t=t, phi=phi, dt=dt, dphi=dphi, exited=exited)


# ========== distance by shooting ==========

def warped_distance(profile: WarpProfile, p: WarpedPoint, q: WarpedPoint) -> float:
    """Length of a minimizing geodesic from p to q.

    Rotates p onto phi = 0, shoots a fan of directions turning towards
    increasing phi, and brackets directions whose geodesic meets the ray
    through q at radius t_q. Both ways around the axis are tried, and the
    path through the pole (length t_p + t_q) is always a candidate.
    """
    _check_point(profile, p)
    _check_point(profile, q)
    if p.t == 0:
        return float(q.t)
    if q.t == 0:
        return float(p.t)
    lower = abs(p.t - q.t)
    upper = p.t + q.t
    dphi = float(circular_distance(p.phi, q.phi))
    if dphi < 1e-14:
        return float(lower)
    best = upper
    for sigma in _shooting_lengths(profile, p.t, (dphi, TWO_PI - dphi), q.t, upper):
        best = min(best, sigma)
    return float(min(max(best, lower), upper))


def _crossings(profile: WarpProfile, t0: float, alphas: np.ndarray, targets, length: float):
    """For each shot and target angle, the arclength and radius at which the
    geodesic first reaches that angle (nan when it does not within length)."""
    y0 = _initial_state(profile, t0, 0.0, alphas)
    states, _, h = _integrate(profile, y0, length, keep="all")
    t, _, dt, dphi, _ = _polar(profile, states)
    phi = np.unwrap(np.arctan2(states[..., 1], states[..., 0]), axis=0)
    out = []
    cols = np.arange(len(alphas))
    for target in targets:
        hit = phi >= target
        reached = hit.any(axis=0) & ~hit[0]
        k = np.where(reached, np.argmax(hit, axis=0), 1)
        k = np.clip(k, 1, len(states) - 1)
        a = k - 1
        frac = _hermite_root(phi[a, cols], phi[k, cols], dphi[a, cols] * h, dphi[k, cols] * h, target)
        sigma = (a + frac) * h
        radius = _hermite_eval(t[a, cols], t[k, cols], dt[a, cols] * h, dt[k, cols] * h, frac)
        out.append((np.where(reached, sigma, np.nan), np.where(reached, radius, np.nan)))
    return out


def _hermite_eval(y0, y1, m0, m1, x):
    x2, x3 = x * x, x * x * x
    return ((2 * x3 - 3 * x2 + 1) * y0 + (x3 - 2 * x2 + x) * m0
            + (-2 * x3 + 3 * x2) * y1 + (x3 - x2) * m1)


def _hermite_root(y0, y1, m0, m1, target):
    span = np.where(y1 - y0 > 0, y1 - y0, 1.0)
    x = np.clip((target - y0) / span, 0.0, 1.0)
    for _ in range(6):
        x2 = x * x
        val = _hermite_eval(y0, y1, m0, m1, x) - target
        der = ((6 * x2 - 6 * x) * y0 + (3 * x2 - 4 * x + 1) * m0
               + (-6 * x2 + 6 * x) * y1 + (3 * x2 - 2 * x) * m1)
        x = np.clip(x - val / np.where(np.abs(der) > 1e-300, der, 1e-300), 0.0, 1.0)
    return x


def _shooting_lengths(profile: WarpProfile, t0: float, targets, t_goal: float, length: float) -> List[float]:
    alphas = np.linspace(0.0, math.pi, FAN_SIZE + 2)[1:-1]
    coarse = _crossings(profile, t0, alphas, targets, length)
    found = []
    for ti, target in enumerate(targets):
        sigma, radius = coarse[ti]
        brackets = _sign_brackets(alphas, radius - t_goal)
        for _ in range(REFINE_ROUNDS):
            refined = []
            for a_lo, a_hi in brackets:
                sub = np.linspace(a_lo, a_hi, FAN_SIZE)
                (sig_s, rad_s), = _crossings(profile, t0, sub, (target,), length)
                inner = _sign_brackets(sub, rad_s - t_goal)
                if not inner:
                    raise NonConvergenceError("shooting bracket lost its sign change", bracket=(a_lo, a_hi))
                refined.extend(inner)
            brackets = refined
        for a_lo, a_hi in brackets:
            pair = np.array([a_lo, a_hi])
            (sig, rad), = _crossings(profile, t0, pair, (target,), length)
            g = rad - t_goal
            if np.any(np.isnan(g)) or g[0] == g[1]:
                continue
            w = -g[0] / (g[1] - g[0])
            found.append(float(sig[0] + w * (sig[1] - sig[0])))
    return found


def _sign_brackets(alphas: np.ndarray, g: np.ndarray) -> List[Tuple[float, float]]:
    """Consecutive direction pairs where g changes sign (both values finite)."""
    out = []
    for i in range(len(alphas) - 1):
        a, b = g[i], g[i + 1]
        if np.isnan(a) or np.isnan(b):
            continue
        if a == 0 or a * b < 0:
            out.append((float(alphas[i]), float(alphas[i + 1])))
    return out


# ========== geodesic / sampling handle ==========

class WarpedSpace:
    """Geodesic and sampling handle on a warped surface based at the pole."""

    def __init__(self, profile: WarpProfile):
        self.profile = profile

    @property
    def max_length(self) -> float:
        return self.profile.t_max

    def net_candidates(self, center, radius: float, spacing: float):
        if center.t != 0:
            raise DomainError("warped nets are centred at the pole")
        radius = min(radius, self.profile.t_max * (1 - 1e-9))
        rows = [np.zeros((1, 2))]
        for k in range(1, int(math.floor(radius / spacing + 1e-9)) + 1):
            tk = k * spacing
            count = max(1, int(math.ceil(TWO_PI * float(self.profile.f(np.asarray(tk))) / spacing)))
            phi = np.arange(count) * (TWO_PI / count)
            rows.append(np.column_stack([np.full(count, tk), phi]))
        points = np.vstack(rows)
        return points, points[:, 0].copy()

    def pairwise(self, P, Q) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        out = np.empty((len(P), len(Q)))
        for i, (ta, pa) in enumerate(P):
            for j, (tb, pb) in enumerate(Q):
                out[i, j] = warped_distance(self.profile, WarpedPoint(ta, pa), WarpedPoint(tb, pb))
        return out

    def shoot(self, base: WarpedPoint, alphas, lengths) -> np.ndarray:
        alphas = np.asarray(alphas, dtype=float)
        out = np.empty((len(alphas), len(lengths), 2))
        for j, length in enumerate(lengths):
            fan = shoot_fan(self.profile, base, alphas, float(length))
            out[:, j, 0] = fan.t
            out[:, j, 1] = fan.phi
        return out

    def distances(self, E1, E2) -> np.ndarray:
        E1 = np.asarray(E1, dtype=float).reshape(-1, 2)
        E2 = np.asarray(E2, dtype=float).reshape(-1, 2)
        return np.array([warped_distance(self.profile, WarpedPoint(*a), WarpedPoint(*b))
                         for a, b in zip(E1, E2)])

    def base_row(self, p) -> np.ndarray:
        if isinstance(p, WarpedPoint):
            return np.array([p.t, p.phi])
        return np.asarray(p, dtype=float)

    def ray_clearance(self, base: WarpedPoint, alphas, R: float, center) -> np.ndarray:
        """Clearance from the pole: the smallest radius along each geodesic."""
        if center.t != 0:
            raise DomainError("warped bad-direction sets are supported for balls about the pole")
        out = np.empty(len(alphas))
        for i, alpha in enumerate(alphas):
            out[i] = float(np.min(geodesic_shoot(self.profile, base, float(alpha), R).t))
        return out
