"""
neck - two space forms glued through a Schwarzschild neck

Excises B_{p_i}(r) from each side and joins the boundary circles through the
conformally flat tube h(t) (dt^2 + f(t)^2 dphi^2), h = (1 + m/2t)^4 near the
throat. The two halves meet at the fixed circle t = m/2 of the isometric
inversion s = m^2/(4t). Outside t = r each side is exactly its space form.

Points are rows (side, t, phi): polar coordinates about p_side, t >= r on the
exterior and m/2 <= t < r inside the neck half of that side.

Usage:
    from engine.neck import build_glued, neck_diameter, glued_distance, GluedPoint
    g = build_glued(0.0, 0.0, 0.1, 0.5)
    diam = neck_diameter(g)
    d = glued_distance(g, GluedPoint(1, 1.0, 0.0), GluedPoint(2, 1.0, 0.0))
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import csgraph

from engine.errors import DomainError
from engine.geom_util import TWO_PI, circular_distance, smoothstep5, smoothstep5_d1, smoothstep5_d2
from engine.spaceform import (
    SpaceFormParams,
    law_of_cosines,
    origin,
    polar_lattice,
    segment_clearance,
    vertex_angle,
    warp_factor_derivatives,
)

logger = logging.getLogger(__name__)

RING_SPACING_DIVISOR = 40
N_ANGLES = 288
PORTAL_STRIDE = 4
NEIGHBOUR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (1, -2), (2, 1), (2, -1))
PROFILE_GRID = 20001
VISIBILITY_TOL = 1e-12
M_RULE = "m = r^2/4"


def diameter_bound(r: float) -> float:
    """16 (r + 4 r^2)."""
    return 16.0 * (r + 4.0 * r * r)


@dataclass(frozen=True)
class NeckProfile:
    """One half of the neck, t in [m/2, r], joined to the space form of
    curvature K at t = r."""
    r: float
    m: float
    K: float
    side: int

    def __post_init__(self):
        if self.side not in (1, 2):
            raise DomainError(f"side must be 1 or 2, got {self.side!r}")
        if not 0 < self.m < self.r:
            raise DomainError("mass parameter must satisfy 0 < m < r", bound="0 < m < r")

    def _blend(self, t):
        u = (np.asarray(t, dtype=float) - self.r / 2.0) / (self.r / 2.0)
        return smoothstep5(u), smoothstep5_d1(u) / (self.r / 2.0), smoothstep5_d2(u) / (self.r / 2.0) ** 2

    def schwarzschild(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 + self.m / (2.0 * t)) ** 4

    def h(self, t):
        t = np.asarray(t, dtype=float)
        S, _, _ = self._blend(t)
        return self.schwarzschild(t) * (1.0 - S) + S

    def dh(self, t):
        t = np.asarray(t, dtype=float)
        S, dS, _ = self._blend(t)
        A = self.schwarzschild(t)
        dA = 4.0 * (1.0 + self.m / (2.0 * t)) ** 3 * (-self.m / (2.0 * t * t))
        return dA * (1.0 - S) + (1.0 - A) * dS

    def f(self, t):
        t = np.asarray(t, dtype=float)
        S, _, _ = self._blend(t)
        fk = warp_factor_derivatives(self.K, t)[0]
        return t * (1.0 - S) + fk * S

    def df(self, t):
        t = np.asarray(t, dtype=float)
        S, dS, _ = self._blend(t)
        fk, dfk, _ = warp_factor_derivatives(self.K, t)
        return (1.0 - S) + dfk * S + (fk - t) * dS

    def radius(self, t):
        """Circumference radius sqrt(h) f of the circle at coordinate t."""
        return np.sqrt(self.h(t)) * self.f(t)


@dataclass(frozen=True)
class GluedPoint:
    side: int
    t: float
    phi: float = 0.0

    def as_row(self) -> np.ndarray:
        return np.array([float(self.side), float(self.t), float(self.phi)])


@dataclass(frozen=True)
class GluedManifold:
    side1: SpaceFormParams
    side2: SpaceFormParams
    r: float
    m: float
    epsilon_target: Optional[float] = None
    necks: Tuple[NeckProfile, NeckProfile] = field(init=False)
    _cache: Dict[str, Any] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "necks", (NeckProfile(self.r, self.m, self.side1.K, 1),
                                           NeckProfile(self.r, self.m, self.side2.K, 2)))

    def params(self, side: int) -> SpaceFormParams:
        return self.side1 if side == 1 else self.side2

    @property
    def throat(self) -> float:
        return self.m / 2.0

    @property
    def graph(self) -> "NeckGraph":
        if "graph" not in self._cache:
            self._cache["graph"] = NeckGraph(self)
        return self._cache["graph"]

    def describe(self) -> Dict[str, Any]:
        return {
            "K1": self.side1.K,
            "K2": self.side2.K,
            "r": self.r,
            "m": self.m,
            "m_rule": M_RULE,
            "epsilon_target": self.epsilon_target,
            "blend": "quintic smoothstep on [r/2, r]",
            "knots": [self.m / 2.0, self.r / 2.0, self.r],
            "diameter_bound": diameter_bound(self.r),
        }

    def to_json(self) -> str:
        return json.dumps(self.describe(), indent=2, sort_keys=True)


def build_glued(K1: float, K2: float, r: float, epsilon_target: Optional[float] = None) -> GluedManifold:
    """Glue the space forms of curvature K1 and K2 with excision radius r."""
    side1 = SpaceFormParams(float(K1), 2)
    side2 = SpaceFormParams(float(K2), 2)
    if not r > 0:
        raise DomainError(f"excision radius must be positive, got {r!r}", bound="r > 0")
    for p in (side1, side2):
        if p.K > 0 and r >= p.diameter / 2.0:
            raise DomainError(f"r={r!r} too large for K={p.K!r}", bound="r < pi/(2 sqrt(K))")
        fk = float(warp_factor_derivatives(p.K, r)[0])
        if not fk < 2.0 * r:
            raise DomainError(f"f_K(r)={fk:.6g} is not below 2r for K={p.K!r}", bound="f_K(r) < 2r")
    if epsilon_target is not None:
        eps = float(epsilon_target)
        limit = min(law_of_cosines(p.K, eps, eps, eps) for p in (side1, side2))
        if not r < limit:
            raise DomainError(f"r={r!r} too large for epsilon={eps!r}",
                              bound=f"r < min_i F_Ki(eps, eps, eps) = {limit:.6g}")
    g = GluedManifold(side1, side2, float(r), float(r) * float(r) / 4.0, epsilon_target)
    logger.info(f"✓ Glued manifold built: K1={K1}, K2={K2}, r={r}, m={g.m:.6g}")
    return g


# ========== neck graph ==========

class NeckGraph:
    """Ring graph of the neck in signed arclength rho (side 1 positive).

    Rings are evenly spaced (at most r/40 apart) with the throat on ring 0;
    each ring carries N_ANGLES nodes. The outermost rings sit on the
    boundary circles t = r and carry the portals.
    """

    def __init__(self, g: GluedManifold, spacing_divisor: int = RING_SPACING_DIVISOR, n_angles: int = N_ANGLES):
        self.g = g
        self.n_angles = n_angles
        t_dense = np.linspace(g.throat, g.r, PROFILE_GRID)
        speed = np.sqrt(g.necks[0].h(t_dense))
        self._t_dense = t_dense
        self._rho_dense = integrate.cumulative_trapezoid(speed, t_dense, initial=0.0)
        self.half_length = float(self._rho_dense[-1])

        n_half = int(math.ceil(self.half_length / (g.r / spacing_divisor)))
        self.ring_step = self.half_length / n_half
        self.rho = np.arange(-n_half, n_half + 1) * self.ring_step
        self.n_rings = len(self.rho)
        self.R = self.radius_at(self.rho)

        self.matrix = self._build_edges()
        portal_angles = np.arange(0, n_angles, PORTAL_STRIDE)
        self.portal_phi = portal_angles * (TWO_PI / n_angles)
        # portals of side 1 first (outermost ring), then side 2 (ring 0)
        self.portal_nodes = np.concatenate([(self.n_rings - 1) * n_angles + portal_angles, portal_angles])
        self.n_portals_side = len(portal_angles)
        self.portal_rows = self._distances_from(tuple(self.portal_nodes))
        self.portal_table = self.portal_rows[:, self.portal_nodes]
        logger.debug(f"neck graph: {self.n_rings} rings x {n_angles} angles")

    def t_of_rho(self, rho):
        return np.interp(np.abs(rho), self._rho_dense, self._t_dense)

    def rho_of_t(self, t):
        return np.interp(t, self._t_dense, self._rho_dense)

    def radius_at(self, rho):
        rho = np.asarray(rho, dtype=float)
        t = self.t_of_rho(rho)
        return np.where(rho >= 0, self.g.necks[0].radius(t), self.g.necks[1].radius(t))

    def _build_edges(self) -> sparse.csr_matrix:
        n = self.n_angles
        dphi_unit = TWO_PI / n
        rows, cols, vals = [], [], []
        j = np.arange(n)
        for dk, dj in NEIGHBOUR_OFFSETS:
            k = np.arange(self.n_rings - dk)
            if len(k) == 0:
                continue
            drho = self.rho[k + dk] - self.rho[k]
            r0 = self.R[k]
            r1 = self.R[k + dk]
            rm = self.radius_at(0.5 * (self.rho[k] + self.rho[k + dk]))
            dphi = abs(dj) * dphi_unit
            # Simpson rule along the straight chart segment
            length = (np.hypot(drho, r0 * dphi) + 4 * np.hypot(drho, rm * dphi) + np.hypot(drho, r1 * dphi)) / 6.0
            kk, jj = np.meshgrid(k, j, indexing="ij")
            rows.append((kk * n + jj).ravel())
            cols.append(((kk + dk) * n + (jj + dj) % n).ravel())
            vals.append(np.repeat(length, n))
        size = self.n_rings * n
        m = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(size, size))
        return m.tocsr()

    @lru_cache(maxsize=256)
    def _row(self, node: int) -> np.ndarray:
        return csgraph.dijkstra(self.matrix, directed=False, indices=node)

    def _distances_from(self, nodes: Tuple[int, ...]) -> np.ndarray:
        return csgraph.dijkstra(self.matrix, directed=False, indices=list(nodes))

    def rows(self, nodes) -> np.ndarray:
        return np.array([self._row(int(v)) for v in nodes]).reshape(len(nodes), -1)

    def snap(self, side, t, phi):
        """Nearest graph node and the chart distance to it."""
        side = np.asarray(side)
        rho = np.where(side == 1, 1.0, -1.0) * self.rho_of_t(np.asarray(t, dtype=float))
        k = np.clip(np.rint(rho / self.ring_step).astype(int) + (self.n_rings - 1) // 2, 0, self.n_rings - 1)
        dphi_unit = TWO_PI / self.n_angles
        j = np.rint(np.mod(phi, TWO_PI) / dphi_unit).astype(int) % self.n_angles
        offset = np.hypot(rho - self.rho[k], self.R[k] * circular_distance(phi, j * dphi_unit))
        return k * self.n_angles + j, offset

    def node_coords(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes)
        k, j = nodes // self.n_angles, nodes % self.n_angles
        rho = self.rho[k]
        side = np.where(rho >= 0, 1.0, 2.0)
        return np.column_stack([side, self.t_of_rho(rho), j * (TWO_PI / self.n_angles)])


# ========== diameter ==========

def neck_diameter_upper(g: GluedManifold) -> float:
    """Two radial legs plus half the throat circle."""
    graph = g.graph
    return 2.0 * graph.half_length + math.pi * float(graph.R[(graph.n_rings - 1) // 2])


def neck_diameter(g: GluedManifold) -> float:
    """Intrinsic diameter of the neck region t <= r (both halves), measured
    by Dijkstra on the neck graph. By rotational symmetry the sources are the
    phi = 0 node of every ring."""
    graph = g.graph
    sources = np.arange(graph.n_rings) * graph.n_angles
    diam = 0.0
    for chunk in np.array_split(sources, max(1, len(sources) // 32)):
        dist = csgraph.dijkstra(graph.matrix, directed=False, indices=chunk)
        diam = max(diam, float(np.max(dist[np.isfinite(dist)])))
    bound = diameter_bound(g.r)
    if diam >= 0.95 * bound:
        logger.warning(f"⚠ neck diameter {diam:.6g} within 5% of its bound {bound:.6g}; "
                       "refine the sampling resolution")
    return diam


def inversion_defect(g: GluedManifold, samples: int = 1001) -> float:
    """Largest relative mismatch of the metric under s = m^2/(4t) on the
    unblended core t in [m/2, r/2]."""
    neck = g.necks[0]
    t = np.linspace(g.throat, g.r / 2.0, samples)
    s = g.m * g.m / (4.0 * t)
    ds = g.m * g.m / (4.0 * t * t)
    radial = neck.schwarzschild(s) * ds * ds
    angular = neck.schwarzschild(s) * s * s
    ref_radial = neck.schwarzschild(t)
    ref_angular = ref_radial * t * t
    return float(max(np.max(np.abs(radial - ref_radial) / ref_radial),
                     np.max(np.abs(angular - ref_angular) / ref_angular)))


def continuity_defect(g: GluedManifold) -> float:
    """Jumps of h, h', f and f' at the blend junctions t = r/2 and t = r."""
    worst = 0.0
    for neck in g.necks:
        fk, dfk, _ = warp_factor_derivatives(neck.K, g.r)
        A = float(neck.schwarzschild(g.r / 2.0))
        dA = 4.0 * (1.0 + g.m / g.r) ** 3 * (-g.m / (2.0 * (g.r / 2.0) ** 2))
        jumps = (
            abs(float(neck.h(g.r / 2.0)) - A),
            abs(float(neck.dh(g.r / 2.0)) - dA),
            abs(float(neck.f(g.r / 2.0)) - g.r / 2.0),
            abs(float(neck.df(g.r / 2.0)) - 1.0),
            abs(float(neck.h(g.r)) - 1.0),
            abs(float(neck.dh(g.r))),
            abs(float(neck.f(g.r)) - float(fk)),
            abs(float(neck.df(g.r)) - float(dfk)),
        )
        worst = max(worst, max(jumps))
    return worst


# ========== distances ==========

def _as_rows(points) -> np.ndarray:
    if isinstance(points, GluedPoint):
        return points.as_row()[None, :]
    return np.atleast_2d(np.asarray(points, dtype=float))


def _check_rows(g: GluedManifold, P: np.ndarray) -> None:
    if np.any((P[:, 0] != 1) & (P[:, 0] != 2)):
        raise DomainError("glued points must be tagged with side 1 or 2")
    if np.any(P[:, 1] < g.throat * (1 - 1e-12)):
        raise DomainError("point lies past the throat", bound=f"t >= m/2 = {g.throat!r}")
    for side in (1, 2):
        p = g.params(side)
        if p.K > 0 and np.any(P[P[:, 0] == side, 1] > p.diameter * (1 + 1e-12)):
            raise DomainError("point beyond the spherical model", bound="t <= pi/sqrt(K)")


def _exit_vectors(g: GluedManifold, P: np.ndarray) -> np.ndarray:
    """Distance from each point to each portal, leaving the point directly
    (exterior geodesic or neck graph), inf where no such leg exists."""
    graph = g.graph
    n_side = graph.n_portals_side
    out = np.full((len(P), 2 * n_side), np.inf)
    exterior = P[:, 1] >= g.r
    for side in (1, 2):
        sel = np.nonzero(exterior & (P[:, 0] == side))[0]
        if len(sel) == 0:
            continue
        K = g.params(side).K
        tx = P[sel, 1][:, None]
        gap = circular_distance(P[sel, 2][:, None], graph.portal_phi[None, :])
        leg = law_of_cosines(K, gap, tx, np.full_like(gap, g.r))
        if K == 0:
            visible = tx * tx >= g.r * g.r + leg * leg - VISIBILITY_TOL
        elif K > 0:
            a = math.sqrt(K)
            visible = np.cos(a * tx) <= np.cos(a * g.r) * np.cos(a * leg) + VISIBILITY_TOL
        else:
            a = math.sqrt(-K)
            visible = np.cosh(a * tx) >= np.cosh(a * g.r) * np.cosh(a * leg) - VISIBILITY_TOL
        # points on the boundary circle see no portal strictly; use the nearest two
        blind = ~visible.any(axis=1)
        if np.any(blind):
            nearest = np.argsort(gap[blind], axis=1)[:, :2]
            fix = np.zeros_like(visible[blind])
            np.put_along_axis(fix, nearest, True, axis=1)
            visible[blind] = fix
        block = np.where(visible, leg, np.inf)
        cols = slice(0, n_side) if side == 1 else slice(n_side, 2 * n_side)
        out[sel, cols] = block
    inner = np.nonzero(~exterior)[0]
    if len(inner):
        nodes, offset = graph.snap(P[inner, 0], P[inner, 1], P[inner, 2])
        out[inner] = graph.portal_rows[:, nodes].T + offset[:, None]
    return out


def _through_portals(g: GluedManifold, B: np.ndarray, chunk: int = 128) -> np.ndarray:
    """A[x, b] = min_a B[x, a] + G[a, b]."""
    G = g.graph.portal_table
    A = np.empty_like(B)
    for start in range(0, len(B), chunk):
        blk = B[start:start + chunk]
        A[start:start + chunk] = np.min(blk[:, :, None] + G[None, :, :], axis=1)
    return A


def _direct(g: GluedManifold, P: np.ndarray, Q: np.ndarray, paired: bool) -> np.ndarray:
    """Distances along paths that do not use the portals: exterior geodesics
    clear of the excised ball, and paths inside the neck graph."""
    shape = (len(P),) if paired else (len(P), len(Q))
    out = np.full(shape, np.inf)
    ext_p = P[:, 1] >= g.r
    ext_q = Q[:, 1] >= g.r
    for side in (1, 2):
        K = g.params(side).K
        sp = ext_p & (P[:, 0] == side)
        sq = ext_q & (Q[:, 0] == side)
        if paired:
            both = sp & sq
            if not np.any(both):
                continue
            tp, tq = P[both, 1], Q[both, 1]
            gap = circular_distance(P[both, 2], Q[both, 2])
            d = law_of_cosines(K, gap, tp, tq)
            ok = segment_clearance(K, tp, tq, d) >= g.r * (1 - 1e-12)
            out[both] = np.where(ok, d, np.inf)
        else:
            ip, iq = np.nonzero(sp)[0], np.nonzero(sq)[0]
            if len(ip) == 0 or len(iq) == 0:
                continue
            tp, tq = P[ip, 1][:, None], Q[iq, 1][None, :]
            gap = circular_distance(P[ip, 2][:, None], Q[iq, 2][None, :])
            d = law_of_cosines(K, gap, *np.broadcast_arrays(tp, tq))
            ok = segment_clearance(K, *np.broadcast_arrays(tp, tq), d) >= g.r * (1 - 1e-12)
            out[np.ix_(ip, iq)] = np.where(ok, d, np.inf)

    graph = g.graph
    ip, iq = np.nonzero(~ext_p)[0], np.nonzero(~ext_q)[0]
    if len(ip) and len(iq):
        np_, op = graph.snap(P[ip, 0], P[ip, 1], P[ip, 2])
        nq, oq = graph.snap(Q[iq, 0], Q[iq, 1], Q[iq, 2])
        rows = graph.rows(np_)
        if paired:
            both = np.intersect1d(ip, iq)
            pos_p = np.searchsorted(ip, both)
            pos_q = np.searchsorted(iq, both)
            d = rows[pos_p, nq[pos_q]] + op[pos_p] + oq[pos_q]
            out[both] = np.minimum(d, _local_chart(graph, P[both], Q[both], d))
        else:
            d = rows[:, nq] + op[:, None] + oq[None, :]
            Pb, Qb = np.broadcast_arrays(P[ip][:, None, :], Q[iq][None, :, :])
            local = _local_chart(graph, Pb.reshape(-1, 3), Qb.reshape(-1, 3), d.ravel()).reshape(d.shape)
            out[np.ix_(ip, iq)] = np.minimum(d, local)
    return out


def _local_chart(graph: NeckGraph, P: np.ndarray, Q: np.ndarray, via_graph: np.ndarray) -> np.ndarray:
    """Straight chart length sqrt(drho^2 + R^2 dphi^2) for neck pairs a few
    graph cells apart; inf elsewhere."""
    sign_p = np.where(P[:, 0] == 1, 1.0, -1.0)
    sign_q = np.where(Q[:, 0] == 1, 1.0, -1.0)
    rho_p = sign_p * graph.rho_of_t(P[:, 1])
    rho_q = sign_q * graph.rho_of_t(Q[:, 1])
    R = np.maximum(graph.radius_at(rho_p), graph.radius_at(rho_q))
    local = np.hypot(rho_p - rho_q, R * circular_distance(P[:, 2], Q[:, 2]))
    cell = 2.0 * (graph.ring_step + float(np.max(graph.R)) * TWO_PI / graph.n_angles)
    return np.where(via_graph <= cell, local, np.inf)


def glued_pairwise(g: GluedManifold, P, Q, chunk: int = 64) -> np.ndarray:
    """Matrix of glued distances between point rows P and Q."""
    P, Q = _as_rows(P), _as_rows(Q)
    _check_rows(g, P)
    _check_rows(g, Q)
    A = _through_portals(g, _exit_vectors(g, P))
    B = _exit_vectors(g, Q)
    out = _direct(g, P, Q, paired=False)
    for start in range(0, len(P), chunk):
        blk = A[start:start + chunk]
        route = np.min(blk[:, None, :] + B[None, :, :], axis=2)
        out[start:start + chunk] = np.minimum(out[start:start + chunk], route)
    return out


def glued_paired(g: GluedManifold, P, Q) -> np.ndarray:
    """Elementwise glued distances d(P[i], Q[i])."""
    P, Q = _as_rows(P), _as_rows(Q)
    _check_rows(g, P)
    _check_rows(g, Q)
    A = _through_portals(g, _exit_vectors(g, P))
    B = _exit_vectors(g, Q)
    return np.minimum(_direct(g, P, Q, paired=True), np.min(A + B, axis=1))


def glued_distance(g: GluedManifold, x: GluedPoint, y: GluedPoint) -> float:
    return float(glued_paired(g, x, y)[0])


# ========== geodesic / sampling handle ==========

class GluedSpace:
    """Geodesic and sampling handle on M_r.

    Geodesics are shot in the exterior of side 1 or 2 with the closed form of
    the space form; rays that dip into the excised ball are the bad
    directions and carry no meaning past that point.
    """

    def __init__(self, g: GluedManifold):
        self.g = g

    def __repr__(self):
        return f"GluedSpace(K1={self.g.side1.K}, K2={self.g.side2.K}, r={self.g.r})"

    @property
    def max_length(self) -> float:
        return min(self.g.side1.diameter, self.g.side2.diameter)

    def center(self) -> np.ndarray:
        """The phi = 0 point of the throat circle."""
        return np.array([1.0, self.g.throat, 0.0])

    def net_candidates(self, center, radius: float, spacing: float) -> Tuple[np.ndarray, np.ndarray]:
        """Polar lattices of both exteriors about p_i plus neck rings, with
        their glued distance to `center`."""
        rows = []
        for side in (1, 2):
            params = self.g.params(side)
            reach = radius + self.g.r
            if params.K > 0:
                reach = min(reach, params.diameter * (1 - 1e-9))
            _, t, phi = polar_lattice(params, origin(params), reach, spacing)
            keep = t >= self.g.r
            rows.append(np.column_stack([np.full(keep.sum(), float(side)), t[keep], phi[keep]]))
        graph = self.g.graph
        stride = max(1, int(round(spacing / graph.ring_step)))
        for k in sorted(set(range(0, graph.n_rings, stride)) | {graph.n_rings - 1}):
            rho = graph.rho[k]
            count = max(1, int(math.ceil(TWO_PI * graph.R[k] / spacing)))
            phi = np.arange(count) * (TWO_PI / count)
            side = 1.0 if rho >= 0 else 2.0
            t = float(graph.t_of_rho(rho))
            rows.append(np.column_stack([np.full(count, side), np.full(count, t), phi]))
        points = np.vstack(rows)
        radial = glued_pairwise(self.g, np.asarray(center, dtype=float), points)[0]
        keep = radial <= radius + spacing
        return points[keep], radial[keep]

    def pairwise(self, P, Q) -> np.ndarray:
        return glued_pairwise(self.g, P, Q)

    def _endpoints(self, base: np.ndarray, alphas: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        side, tb, phib = int(base[0]), float(base[1]), float(base[2])
        K = self.g.params(side).K
        alphas, lengths = np.broadcast_arrays(alphas, lengths)
        gap = circular_distance(alphas, math.pi)
        te = law_of_cosines(K, gap, np.full_like(gap, tb), lengths)
        turn = vertex_angle(K, np.full_like(gap, tb), te, lengths)
        sign = np.where(np.sin(alphas) >= 0, 1.0, -1.0)
        return np.stack([np.full_like(te, float(side)), te, np.mod(phib + sign * turn, TWO_PI)], axis=-1)

    def shoot(self, base, alphas, lengths) -> np.ndarray:
        """Endpoints (side, t, phi) of shape (len(alphas), len(lengths), 3);
        alpha is measured from the outward radial direction at the base."""
        base = _as_rows(base)[0]
        if base[1] < self.g.r:
            raise DomainError("geodesic shooting starts from an exterior point", bound=f"t >= r = {self.g.r!r}")
        a = np.asarray(alphas, dtype=float)[:, None]
        L = np.asarray(lengths, dtype=float)[None, :]
        return self._endpoints(base, a, L)

    def distances(self, E1, E2) -> np.ndarray:
        E1 = np.asarray(E1, dtype=float).reshape(-1, 3)
        E2 = np.asarray(E2, dtype=float).reshape(-1, 3)
        return glued_paired(self.g, E1, E2)

    def base_row(self, p) -> np.ndarray:
        return _as_rows(p)[0]

    def ray_clearance(self, base, alphas, R: float, center=None) -> np.ndarray:
        """Distance from p_side to each geodesic segment of length R; the neck
        is entered exactly when this drops below r."""
        base = _as_rows(base)[0]
        K = self.g.params(int(base[0])).K
        tb = float(base[1])
        alphas = np.asarray(alphas, dtype=float)
        gap = circular_distance(alphas, math.pi)
        far = law_of_cosines(K, gap, np.full_like(gap, R), np.full_like(gap, tb))
        return np.asarray(segment_clearance(K, tb, far, R))

    def chord_clearance(self, E1, E2, center=None) -> np.ndarray:
        E1 = np.asarray(E1, dtype=float).reshape(-1, 3)
        E2 = np.asarray(E2, dtype=float).reshape(-1, 3)
        K = self.g.params(int(E1[0, 0])).K
        d = law_of_cosines(K, circular_distance(E1[:, 2], E2[:, 2]), E1[:, 1], E2[:, 1])
        clear = np.asarray(segment_clearance(K, E1[:, 1], E2[:, 1], d))
        return np.where(E1[:, 0] == E2[:, 0], clear, 0.0)
