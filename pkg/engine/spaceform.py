"""
spaceform - exact constant-curvature geometry

Distances, exponential maps, the triangle function F_K, angle inversion
and ball/annulus volumes on the model spaces S^n (K > 0), E^n (K = 0) and
H^n (K < 0). Curved models live in R^{n+1}: the sphere of radius 1/sqrt(K)
and the upper sheet of the hyperboloid <x, x>_M = -1/|K|.

Usage:
    from engine.spaceform import SpaceFormParams, law_of_cosines, invert_angle
    d = law_of_cosines(1.0, math.pi / 2, 1.0, 1.0)
    theta = invert_angle(0.0, 3.0, 4.0, 5.0)
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import integrate, optimize, special

from engine.errors import (
    DegenerateTriangleError,
    DomainError,
    NonConvergenceError,
    NoSolutionError,
)
from engine.geom_util import TWO_PI

logger = logging.getLogger(__name__)

ANGLE_TOL = 1e-12
SERIES_THRESHOLD = 1e-8
POINT_RTOL = 1e-10
TANGENT_TOL = 1e-9
BISECT_XTOL = 1e-12
BISECT_MAXITER = 80


@dataclass(frozen=True)
class SpaceFormParams:
    K: float
    n: int = 2

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise DomainError(f"space form dimension must be an integer >= 2, got {self.n!r}")
        if not math.isfinite(self.K):
            raise DomainError(f"curvature must be finite, got {self.K!r}")

    @property
    def diameter(self) -> float:
        return math.pi / math.sqrt(self.K) if self.K > 0 else math.inf

    @property
    def radius(self) -> float:
        """Model radius 1/sqrt(|K|); infinite when flat."""
        return 1.0 / math.sqrt(abs(self.K)) if self.K != 0 else math.inf

    @property
    def model_dim(self) -> int:
        return self.n if self.K == 0 else self.n + 1


@dataclass(frozen=True, eq=False)
class SpaceFormPoint:
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


def minkowski_dot(x, y):
    """Lorentzian product -x0*y0 + sum(xi*yi) along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.sum(x[..., 1:] * y[..., 1:], axis=-1) - x[..., 0] * y[..., 0]


def check_point(params: SpaceFormParams, p) -> np.ndarray:
    """Return the coordinates of p after checking the model invariants."""
    x = p.coords if isinstance(p, SpaceFormPoint) else np.asarray(p, dtype=float)
    if x.shape[-1] != params.model_dim:
        raise DomainError(f"point has {x.shape[-1]} coordinates, model needs {params.model_dim}")
    if params.K == 0:
        return x
    rho2 = 1.0 / abs(params.K)
    if params.K > 0:
        norm2 = np.sum(x * x, axis=-1)
        if np.any(np.abs(norm2 - rho2) > POINT_RTOL * rho2 * 10):
            raise DomainError("point is not on the model sphere")
    else:
        norm2 = minkowski_dot(x, x)
        scale = np.maximum(rho2, np.sum(x * x, axis=-1))
        if np.any(np.abs(norm2 + rho2) > POINT_RTOL * scale * 10) or np.any(x[..., 0] <= 0):
            raise DomainError("point is not on the upper hyperboloid sheet")
    return x


# ========== the triangle function F_K ==========

def law_of_cosines(K: float, theta, s, t):
    """Distance between the endpoints of geodesics of lengths s and t leaving
    a common point at angle theta, in the space form of curvature K.

    Vectorized over theta, s and t. Uses the haversine form of the law of
    cosines, which stays accurate for small angles and short sides, and a
    series in K when |K| * max(s, t)^2 is tiny.
    """
    theta, s, t = np.broadcast_arrays(np.asarray(theta, dtype=float),
                                      np.asarray(s, dtype=float),
                                      np.asarray(t, dtype=float))
    scalar = theta.ndim == 0
    K = float(K)
    if not math.isfinite(K):
        raise DomainError(f"curvature must be finite, got {K!r}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
        raise DomainError("law_of_cosines needs finite arguments")
    if np.any(theta < -ANGLE_TOL) or np.any(theta > math.pi + ANGLE_TOL):
        raise DomainError("angle outside [0, pi]", bound="0 <= theta <= pi")
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("negative side length", bound="s, t >= 0")
    if K > 0:
        diam = math.pi / math.sqrt(K)
        if np.any(s > diam * (1 + ANGLE_TOL)) or np.any(t > diam * (1 + ANGLE_TOL)):
            raise DomainError("side longer than the model diameter", bound="s, t <= pi/sqrt(K)")
    out = _fk(K, np.clip(theta, 0.0, math.pi), s, t)
    return float(out) if scalar else out


def _fk(K: float, theta: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    # 1 - cos(theta), evaluated without cancellation near 0
    vers = np.where(theta < 1.0, 2.0 * np.sin(theta / 2.0) ** 2, 1.0 - np.cos(theta))
    flat2 = (s - t) ** 2 + 2.0 * s * t * vers
    if K == 0:
        return np.sqrt(np.maximum(flat2, 0.0))

    a = math.sqrt(abs(K))
    series = abs(K) * np.maximum(s, t) ** 2 < SERIES_THRESHOLD
    with np.errstate(over="ignore", invalid="ignore"):
        if K > 0:
            # hav(d) and 1 - hav(d) as sums of non-negative terms
            prod = np.sin(a * s) * np.sin(a * t)
            x = np.sin(a * (s - t) / 2.0) ** 2 + prod * vers / 2.0
            y = np.cos(a * (s + t) / 2.0) ** 2 + prod * (1.0 - vers / 2.0)
            exact = 2.0 * np.arctan2(np.sqrt(np.maximum(x, 0.0)), np.sqrt(np.maximum(y, 0.0))) / a
            exact = np.clip(exact, 0.0, math.pi / a)
        else:
            x = np.sinh(a * (s - t) / 2.0) ** 2 + np.sinh(a * s) * np.sinh(a * t) * vers / 2.0
            exact = 2.0 * np.arcsinh(np.sqrt(np.maximum(x, 0.0))) / a
    if not np.any(series):
        return exact
    sin2 = np.sin(theta) ** 2
    approx = np.sqrt(np.maximum(flat2 - K * s * s * t * t * sin2 / 3.0, 0.0))
    return np.where(series, approx, exact)


def invert_angle(K: float, a: float, b: float, d: float) -> float:
    """Unique theta in [0, pi] with law_of_cosines(K, theta, a, b) == d."""
    if a < 0 or b < 0 or d < 0:
        raise DomainError("negative length passed to invert_angle")
    if a == 0 and b == 0:
        raise DegenerateTriangleError("both sides are zero; the angle is undetermined")
    lo = law_of_cosines(K, 0.0, a, b)
    hi = law_of_cosines(K, math.pi, a, b)
    tol = 1e-10 * max(1.0, hi)
    if d < lo - tol or d > hi + tol:
        raise NoSolutionError(
            f"no angle realises d={d!r} for sides ({a!r}, {b!r}) at K={K!r}",
            bound=f"{lo!r} <= d <= {hi!r}",
        )
    if d <= lo:
        return 0.0
    if d >= hi:
        return math.pi
    if hi - lo <= 1e-15:
        return 0.0
    try:
        return float(optimize.bisect(lambda th: float(_fk(K, np.asarray(th), np.asarray(a), np.asarray(b))) - d,
                                     0.0, math.pi, xtol=BISECT_XTOL, maxiter=BISECT_MAXITER))
    except RuntimeError as e:
        raise NonConvergenceError(f"angle bisection failed: {e}", bracket=(0.0, math.pi))


def vertex_angle(K: float, a, b, d):
    """Angle between sides a and b of a geodesic triangle with opposite side d.

    Closed-form inverse of law_of_cosines, vectorized; entries with a or b
    equal to zero get angle 0.
    """
    a, b, d = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                                  np.asarray(d, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        if K == 0:
            c = (a * a + b * b - d * d) / (2.0 * a * b)
        elif K > 0:
            k = math.sqrt(K)
            c = (np.cos(k * d) - np.cos(k * a) * np.cos(k * b)) / (np.sin(k * a) * np.sin(k * b))
        else:
            k = math.sqrt(-K)
            c = (np.cosh(k * a) * np.cosh(k * b) - np.cosh(k * d)) / (np.sinh(k * a) * np.sinh(k * b))
        out = np.arccos(np.clip(c, -1.0, 1.0))
    out = np.where((a > 0) & (b > 0), out, 0.0)
    return float(out) if out.ndim == 0 else out


def segment_clearance(K: float, a, b, length):
    """Smallest distance from a point c to the geodesic segment [x, y], given
    a = d(c, x), b = d(c, y) and length = d(x, y). Vectorized.
    """
    a, b, length = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                                       np.asarray(length, dtype=float))
    at_x = vertex_angle(K, a, length, b)
    at_y = vertex_angle(K, b, length, a)
    endpoint = np.minimum(a, b)
    sin_x = np.sin(at_x)
    if K == 0:
        foot = a * sin_x
    elif K > 0:
        k = math.sqrt(K)
        foot = np.arcsin(np.clip(np.sin(k * a) * sin_x, -1.0, 1.0)) / k
    else:
        k = math.sqrt(-K)
        foot = np.arcsinh(np.sinh(k * a) * sin_x) / k
    interior = (at_x < math.pi / 2) & (at_y < math.pi / 2) & (length > 0)
    out = np.where(interior, np.minimum(foot, endpoint), endpoint)
    return float(out) if out.ndim == 0 else out


# ========== model geometry ==========

def origin(params: SpaceFormParams) -> SpaceFormPoint:
    x = np.zeros(params.model_dim)
    if params.K != 0:
        x[0] = params.radius
    return SpaceFormPoint(x)


def _project_tangent(params: SpaceFormParams, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    if params.K == 0:
        return w
    rho2 = params.radius ** 2
    if params.K > 0:
        return w - (np.dot(w, x) / rho2) * x
    return w + (minkowski_dot(w, x) / rho2) * x


def _model_dot(params: SpaceFormParams, u, v):
    if params.K < 0:
        return minkowski_dot(u, v)
    return np.sum(np.asarray(u) * np.asarray(v), axis=-1)


def _check_tangent(params: SpaceFormParams, x: np.ndarray, v: np.ndarray) -> None:
    if v.shape != x.shape:
        raise DomainError("direction has the wrong number of coordinates")
    scale = max(1.0, float(np.linalg.norm(x)) * float(np.linalg.norm(v)))
    if params.K != 0 and abs(float(_model_dot(params, x, v))) > TANGENT_TOL * scale:
        raise DomainError("direction is not tangent to the model at the base point")
    if abs(float(_model_dot(params, v, v)) - 1.0) > TANGENT_TOL * scale:
        raise DomainError("direction is not a unit vector in the model metric")


def tangent_frame(params: SpaceFormParams, base) -> np.ndarray:
    """Orthonormal basis of the tangent space at base, one vector per row."""
    x = check_point(params, base)
    frame = []
    for i in range(params.model_dim):
        w = _project_tangent(params, x, np.eye(params.model_dim)[i])
        for e in frame:
            w = w - _model_dot(params, w, e) * e
        norm2 = float(_model_dot(params, w, w))
        if norm2 > 1e-12:
            frame.append(w / math.sqrt(norm2))
        if len(frame) == params.n:
            break
    return np.array(frame)


def exp_map(params: SpaceFormParams, base: SpaceFormPoint, v, t: float) -> SpaceFormPoint:
    """Point at distance t from base along the unit tangent v."""
    x = check_point(params, base)
    v = np.asarray(v, dtype=float)
    _check_tangent(params, x, v)
    if t < 0:
        raise DomainError("exp_map length must be non-negative")
    return SpaceFormPoint(_exp(params, x, v, t))


def _exp(params: SpaceFormParams, x, v, t):
    t = np.asarray(t, dtype=float)[..., None]
    if params.K == 0:
        return x + t * v
    rho = params.radius
    if params.K > 0:
        return np.cos(t / rho) * x + rho * np.sin(t / rho) * v
    return np.cosh(t / rho) * x + rho * np.sinh(t / rho) * v


def distance(params: SpaceFormParams, p: SpaceFormPoint, q: SpaceFormPoint) -> float:
    return float(_dist(params, check_point(params, p), check_point(params, q)))


def _dist(params: SpaceFormParams, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if params.K == 0:
        return np.linalg.norm(x - y, axis=-1)
    rho = params.radius
    if params.K > 0:
        return 2.0 * rho * np.arctan2(np.linalg.norm(x - y, axis=-1), np.linalg.norm(x + y, axis=-1))
    w = x - y
    return 2.0 * rho * np.arcsinh(np.sqrt(np.maximum(minkowski_dot(w, w), 0.0)) / (2.0 * rho))


def pairwise_distances(params: SpaceFormParams, P, Q, chunk: int = 512) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    out = np.empty((P.shape[0], Q.shape[0]))
    for i in range(0, P.shape[0], chunk):
        out[i:i + chunk] = _dist(params, P[i:i + chunk, None, :], Q[None, :, :])
    return out


def random_unit_tangent(params: SpaceFormParams, base: SpaceFormPoint, rng: np.random.Generator) -> np.ndarray:
    x = check_point(params, base)
    while True:
        w = _project_tangent(params, x, rng.normal(size=params.model_dim))
        norm2 = float(_model_dot(params, w, w))
        if norm2 > 1e-12:
            return w / math.sqrt(norm2)


def random_point(params: SpaceFormParams, rng: np.random.Generator, scale: float = 1.0) -> SpaceFormPoint:
    o = origin(params)
    reach = min(scale, 0.95 * params.diameter)
    v = random_unit_tangent(params, o, rng)
    return SpaceFormPoint(_exp(params, o.coords, v, rng.uniform(0.0, reach)))


def directions(frame: np.ndarray, alphas) -> np.ndarray:
    """Unit tangents cos(a) e1 + sin(a) e2 for each angle a."""
    alphas = np.asarray(alphas, dtype=float)[..., None]
    return np.cos(alphas) * frame[0] + np.sin(alphas) * frame[1]


def polar_angle(params: SpaceFormParams, base, frame: np.ndarray, target) -> np.ndarray:
    """Angle, in the frame at base, of the initial direction towards target."""
    x = check_point(params, base)
    y = np.asarray(target, dtype=float)
    if params.K == 0:
        u = y - x
    elif params.K > 0:
        u = y - (np.sum(y * x, axis=-1, keepdims=True) / params.radius ** 2) * x
    else:
        u = y + (np.asarray(minkowski_dot(y, x))[..., None] / params.radius ** 2) * x
    return np.arctan2(_model_dot(params, u, frame[1]), _model_dot(params, u, frame[0]))


def polar_lattice(params: SpaceFormParams, base, radius: float, spacing: float):
    """Rings of points around base at radial step `spacing` with arc spacing
    at most `spacing`. Returns (coords, t, phi)."""
    if params.n != 2:
        raise DomainError("polar lattices are only defined on surfaces (n = 2)")
    x = check_point(params, base)
    frame = tangent_frame(params, base)
    radius = min(radius, params.diameter * (1 - 1e-9))
    ts, phis = [np.zeros(1)], [np.zeros(1)]
    for k in range(1, int(math.floor(radius / spacing + 1e-9)) + 1):
        tk = k * spacing
        count = max(1, int(math.ceil(TWO_PI * float(warp_factor(params.K, tk)) / spacing)))
        phis.append(np.arange(count) * (TWO_PI / count) + (0.5 * TWO_PI / count) * (k % 2))
        ts.append(np.full(count, tk))
    t = np.concatenate(ts)
    phi = np.concatenate(phis)
    coords = _exp(params, x, directions(frame, phi), t)
    return coords, t, phi


# ========== warp factors and volumes ==========

def warp_factor(K: float, t):
    """f_K(t) = sin(sqrt(K) t)/sqrt(K), t, or sinh(sqrt(-K) t)/sqrt(-K)."""
    return warp_factor_derivatives(K, t)[0]


def warp_factor_derivatives(K: float, t):
    t = np.asarray(t, dtype=float)
    if K == 0:
        return t, np.ones_like(t), np.zeros_like(t)
    a = math.sqrt(abs(K))
    if K > 0:
        return np.sin(a * t) / a, np.cos(a * t), -a * np.sin(a * t)
    return np.sinh(a * t) / a, np.cosh(a * t), a * np.sinh(a * t)


def unit_sphere_area(n: int) -> float:
    """Area of the unit (n-1)-sphere."""
    return float(2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0))


def unit_ball_volume(n: int) -> float:
    return float(math.pi ** (n / 2.0) / special.gamma(n / 2.0 + 1.0))


def ball_volume(n: int, K: float, r: float) -> float:
    """Volume of a metric ball of radius r in the n-dimensional space form."""
    SpaceFormParams(K, n)
    if r < 0:
        raise DomainError("ball radius must be non-negative")
    if K > 0 and r > math.pi / math.sqrt(K) * (1 + ANGLE_TOL):
        raise DomainError("ball radius beyond the model diameter", bound="r <= pi/sqrt(K)")
    if r == 0:
        return 0.0
    if K == 0:
        return unit_ball_volume(n) * r ** n
    a = math.sqrt(abs(K))
    if n == 2:
        if K > 0:
            return 4.0 * math.pi * math.sin(a * r / 2.0) ** 2 / K
        return 4.0 * math.pi * math.sinh(a * r / 2.0) ** 2 / (-K)
    if n == 3 and a * r >= 1e-2:
        if K > 0:
            return math.pi * (2.0 * a * r - math.sin(2.0 * a * r)) / a ** 3
        return math.pi * (math.sinh(2.0 * a * r) - 2.0 * a * r) / a ** 3
    value, _ = integrate.quad(lambda t: float(warp_factor(K, t)) ** (n - 1), 0.0, r,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    return unit_sphere_area(n) * value


def annulus_volume(n: int, K: float, inner: float, outer: float) -> float:
    if inner > outer:
        raise DomainError("annulus inner radius exceeds outer radius")
    return ball_volume(n, K, outer) - ball_volume(n, K, inner)


def volume_ratio(n: int, K: float, H: float, r: float) -> float:
    """V(n, K, r) / V(n, H, r); nonincreasing in r whenever K >= H."""
    return ball_volume(n, K, r) / ball_volume(n, H, r)


# ========== geodesic / sampling handle ==========

class SpaceFormSpace:
    """Geodesic and sampling handle on an exact space form surface.

    Points are model coordinate rows; directions are angles in the tangent
    frame of the base point.
    """

    def __init__(self, params: SpaceFormParams):
        if params.n != 2:
            raise DomainError("SpaceFormSpace handles surfaces only (n = 2)")
        self.params = params

    def __repr__(self):
        return f"SpaceFormSpace(K={self.params.K})"

    @property
    def max_length(self) -> float:
        return self.params.diameter

    # sampling

    def net_candidates(self, center, radius: float, spacing: float) -> Tuple[np.ndarray, np.ndarray]:
        coords, t, _ = polar_lattice(self.params, center, radius, spacing)
        return coords, t

    def pairwise(self, P, Q) -> np.ndarray:
        return pairwise_distances(self.params, P, Q)

    # geodesics

    def shoot(self, base, alphas, lengths) -> np.ndarray:
        """Endpoints exp_base(L * v(alpha)), shape (len(alphas), len(lengths), dim)."""
        x = check_point(self.params, base)
        frame = tangent_frame(self.params, base)
        v = directions(frame, alphas)[:, None, :]
        return _exp(self.params, x, v, np.asarray(lengths, dtype=float)[None, :])

    def distances(self, E1, E2) -> np.ndarray:
        return _dist(self.params, E1, E2)

    def base_row(self, p) -> np.ndarray:
        return check_point(self.params, p)

    def ray_clearance(self, base, alphas, R: float, center) -> np.ndarray:
        """Distance from center to each geodesic segment of length R."""
        x = check_point(self.params, base)
        c = check_point(self.params, center)
        frame = tangent_frame(self.params, base)
        d0 = float(_dist(self.params, x, c))
        if d0 == 0:
            return np.zeros(len(alphas))
        beta = polar_angle(self.params, base, frame, c)
        gap = np.abs(np.mod(np.asarray(alphas) - beta + math.pi, TWO_PI) - math.pi)
        far = law_of_cosines(self.params.K, gap, np.full_like(gap, R), np.full_like(gap, d0))
        return np.asarray(segment_clearance(self.params.K, d0, far, R))

    def chord_clearance(self, E1, E2, center) -> np.ndarray:
        c = check_point(self.params, center)
        return np.asarray(segment_clearance(self.params.K, _dist(self.params, E1, c),
                                            _dist(self.params, E2, c), _dist(self.params, E1, E2)))

    def point_at(self, base, alpha: float, length: float) -> np.ndarray:
        return self.shoot(base, [alpha], [length])[0, 0]
