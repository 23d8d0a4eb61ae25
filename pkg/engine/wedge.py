"""
wedge - space forms joined at discrete points, and the limit experiments

A WedgeSpace is a finite family of space-form surfaces with junctions that
identify one point of a component with one point of another (or of the
same) component. Distances are taken in the quotient length metric: a
direct leg inside one component, or entry leg + junction-to-junction hops +
exit leg.

The experiments compare the glued manifolds M_r with their wedge limit:
GH bounds between sampled balls, isotropy of M_r away from the neck, and
the volume-comparison arithmetic that rules out a two-sided Ricci bound.

Points are rows (component, t, phi) in polar coordinates about the model
origin of the component; components are numbered from 1.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from engine.errors import DisconnectedWedgeError, DomainError, IsolabError
from engine.geom_util import circular_distance
from engine.isotropy import Ball, bad_directions, estimate_F, unseen_check
from engine.metricspace import FiniteMetricSpace, epsilon_net_sample, gh_lower, gh_upper
from engine.neck import GluedSpace, build_glued, neck_diameter_upper
from engine.spaceform import SpaceFormParams, ball_volume, invert_angle, law_of_cosines, origin, polar_lattice

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 6

Site = Tuple[int, float, float]


@dataclass(frozen=True)
class Junction:
    a: Site
    b: Site

    @property
    def ends(self) -> Tuple[Site, Site]:
        return self.a, self.b


class WedgeSpace:
    """Quotient of space-form surfaces by finitely many point identifications."""

    def __init__(self, components: Sequence[SpaceFormParams], junctions: Sequence[Junction],
                 min_separation: float = 0.0):
        self.components = tuple(components)
        self.junctions = tuple(junctions)
        self.min_separation = float(min_separation)
        for p in self.components:
            if p.n != 2:
                raise DomainError("wedge components are surfaces (n = 2)")
        self._validate()
        self.hops = self._junction_distances()

    def __repr__(self):
        return f"WedgeSpace(K={[p.K for p in self.components]}, junctions={len(self.junctions)})"

    def _site_distance(self, u: Site, v: Site) -> float:
        if u[0] != v[0]:
            return math.inf
        K = self.components[u[0] - 1].K
        return float(law_of_cosines(K, float(circular_distance(u[2], v[2])), u[1], v[1]))

    def _validate(self) -> None:
        n_comp = len(self.components)
        for j in self.junctions:
            for comp, t, _ in j.ends:
                if not 1 <= comp <= n_comp:
                    raise DomainError(f"junction refers to missing component {comp}")
                p = self.components[comp - 1]
                if t < 0 or (p.K > 0 and t > p.diameter):
                    raise DomainError("junction site outside its component")
            if j.a[0] == j.b[0] and self._site_distance(j.a, j.b) == 0:
                raise DomainError("a junction must identify two distinct points")

        sites = [e for j in self.junctions for e in j.ends]
        for u, v in itertools.combinations(sites, 2):
            d = self._site_distance(u, v)
            if d < 2.0 * self.min_separation:
                raise DomainError(f"junction sites {u} and {v} are {d:.6g} apart",
                                  bound=f"d >= 2 R = {2 * self.min_separation!r}")

        G = nx.Graph()
        G.add_nodes_from(range(1, n_comp + 1))
        G.add_edges_from((j.a[0], j.b[0]) for j in self.junctions)
        if not nx.is_connected(G):
            raise DisconnectedWedgeError("the junctions do not connect every component")

    def _junction_distances(self) -> np.ndarray:
        """Shortest junction-to-junction lengths inside the quotient."""
        n = len(self.junctions)
        direct = np.full((n, n), math.inf)
        for i, j in itertools.product(range(n), repeat=2):
            if i == j:
                direct[i, j] = 0.0
                continue
            direct[i, j] = min(self._site_distance(u, v)
                               for u in self.junctions[i].ends for v in self.junctions[j].ends)
        if n <= ENUMERATION_LIMIT:
            best = direct.copy()
            for i, j in itertools.product(range(n), repeat=2):
                others = [k for k in range(n) if k not in (i, j)]
                for size in range(1, len(others) + 1):
                    for middle in itertools.permutations(others, size):
                        path = (i,) + middle + (j,)
                        length = sum(direct[path[k], path[k + 1]] for k in range(len(path) - 1))
                        best[i, j] = min(best[i, j], length)
            return best
        G = nx.Graph()
        G.add_nodes_from(range(n))
        for i, j in zip(*np.nonzero(np.isfinite(direct))):
            if i < j:
                G.add_edge(int(i), int(j), weight=float(direct[i, j]))
        return np.asarray(nx.floyd_warshall_numpy(G, nodelist=range(n)))

    # distances

    def _legs(self, P: np.ndarray) -> np.ndarray:
        """Direct distance from each point to each junction (inf across components)."""
        legs = np.full((len(P), len(self.junctions)), math.inf)
        for k, j in enumerate(self.junctions):
            for comp, t, phi in j.ends:
                sel = P[:, 0] == comp
                if not np.any(sel):
                    continue
                K = self.components[comp - 1].K
                d = law_of_cosines(K, circular_distance(P[sel, 2], phi), P[sel, 1], np.full(sel.sum(), t))
                legs[sel, k] = np.minimum(legs[sel, k], d)
        return legs

    def _check(self, P: np.ndarray) -> None:
        comps = P[:, 0]
        if np.any((comps < 1) | (comps > len(self.components)) | (comps != np.round(comps))):
            raise DomainError("wedge points must name a component 1..N")
        if np.any(P[:, 1] < 0):
            raise DomainError("negative polar radius")

    def pairwise(self, P, Q) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self._check(P)
        self._check(Q)
        out = np.full((len(P), len(Q)), math.inf)
        for c, params in enumerate(self.components, start=1):
            ip, iq = np.nonzero(P[:, 0] == c)[0], np.nonzero(Q[:, 0] == c)[0]
            if len(ip) and len(iq):
                gap = circular_distance(P[ip, 2][:, None], Q[iq, 2][None, :])
                tp, tq = np.broadcast_arrays(P[ip, 1][:, None], Q[iq, 1][None, :])
                out[np.ix_(ip, iq)] = law_of_cosines(params.K, gap, tp, tq)
        if self.junctions:
            A = np.min(self._legs(P)[:, :, None] + self.hops[None, :, :], axis=1)
            route = np.min(A[:, None, :] + self._legs(Q)[None, :, :], axis=2)
            out = np.minimum(out, route)
        if not np.all(np.isfinite(out)):
            raise DisconnectedWedgeError("points lie in components no path connects")
        return out

    def net_candidates(self, center, radius: float, spacing: float):
        """Polar lattices about every component origin, kept within reach of center."""
        center = np.atleast_2d(np.asarray(center, dtype=float))
        rows = []
        for c, params in enumerate(self.components, start=1):
            reach = radius + max([t for j in self.junctions for comp, t, _ in j.ends if comp == c] + [0.0]) \
                + (center[0, 1] if center[0, 0] == c else 0.0)
            if params.K > 0:
                reach = min(reach, params.diameter * (1 - 1e-9))
            _, t, phi = polar_lattice(params, origin(params), reach, spacing)
            rows.append(np.column_stack([np.full(len(t), float(c)), t, phi]))
        points = np.vstack(rows)
        radial = self.pairwise(center, points)[0]
        keep = radial <= radius + spacing
        return points[keep], radial[keep]


def wedge_distance(Y: WedgeSpace, x: Site, y: Site) -> float:
    return float(Y.pairwise(np.asarray([x], dtype=float), np.asarray([y], dtype=float))[0, 0])


def two_point_wedge(K1: float, K2: float) -> WedgeSpace:
    """Two space forms joined at their model origins: the limit of M_r."""
    return WedgeSpace([SpaceFormParams(float(K1), 2), SpaceFormParams(float(K2), 2)],
                      [Junction((1, 0.0, 0.0), (2, 0.0, 0.0))])


def pairing_wedge(curvatures: Sequence[float], pairing: Sequence[Tuple[Site, Site]],
                  min_separation: float = 0.0) -> WedgeSpace:
    """Wedge from a fixed-point-free pairing of sites; a pair may join two
    sites of the same component."""
    components = [SpaceFormParams(float(K), 2) for K in curvatures]
    junctions = [Junction(tuple(a), tuple(b)) for a, b in pairing]
    return WedgeSpace(components, junctions, min_separation)


# ========== M_r versus its limit ==========

def hint_correspondence(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> np.ndarray:
    """Pairs relating a sample of M_r to a sample of the two-point wedge:
    side i of M_r is charted on component i, the neck collapses to the
    junction, and each point is joined to its nearest chart neighbour."""
    def chart(rows):
        return np.column_stack([rows[:, 1] * np.cos(rows[:, 2]), rows[:, 1] * np.sin(rows[:, 2])])

    cx, cy = chart(X.coords), chart(Y.coords)
    pairs = []
    for side in (1, 2):
        in_x = np.nonzero(X.coords[:, 0] == side)[0]
        in_y = np.nonzero((Y.coords[:, 0] == side) | (Y.coords[:, 1] < 1e-12))[0]
        if len(in_x) == 0 or len(in_y) == 0:
            continue
        _, nearest_y = cKDTree(cy[in_y]).query(cx[in_x])
        pairs.append(np.column_stack([in_x, in_y[nearest_y]]))
        _, nearest_x = cKDTree(cx[in_x]).query(cy[in_y])
        pairs.append(np.column_stack([in_x[nearest_x], in_y]))
    return np.unique(np.vstack(pairs), axis=0)


def _check_schedule(r_schedule: Sequence[float]) -> List[float]:
    schedule = [float(r) for r in r_schedule]
    if not schedule or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise DomainError("radius schedule must be non-empty and strictly decreasing")
    return schedule


def convergence_experiment(K1: float, K2: float, r_schedule: Sequence[float], D: float, eps_net: float,
                           effort: int = 8, seed: int = 0, threads: int = 1) -> pd.DataFrame:
    """GH bounds between B_p(D) in M_r and B_y(D) in the two-point wedge."""
    schedule = _check_schedule(r_schedule)
    Y_space = two_point_wedge(K1, K2)
    Y = epsilon_net_sample(Y_space, np.array([1.0, 0.0, 0.0]), D, eps_net, seed=seed, prefix="y")
    logger.info(f"✓ Wedge sample ready: {Y.n} points")
    rows = []
    for r in schedule:
        try:
            g = build_glued(K1, K2, r)
            space = GluedSpace(g)
            X = epsilon_net_sample(space, space.center(), D, eps_net, seed=seed, prefix="x",
                                   triangle_tol=max(1e-9, r / 4.0))
            hint = hint_correspondence(X, Y)
            upper = gh_upper(X, Y, effort=effort, seed=seed, hints=[hint], threads=threads)
            lower = gh_lower(X, Y)
        except IsolabError as e:
            logger.warning(f"⚠ convergence row r={r} failed: {e}")
            rows.append({"r": r, "m": r * r / 4.0, "n_X": 0, "n_Y": Y.n,
                         "gh_lower": math.nan, "gh_upper": math.nan, "neck_diameter_upper": math.nan})
            continue
        rows.append({"r": r, "m": g.m, "n_X": X.n, "n_Y": Y.n, "gh_lower": lower, "gh_upper": upper,
                     "neck_diameter_upper": neck_diameter_upper(g)})
        logger.info(f"✓ r={r}: gh in [{lower:.4g}, {upper:.4g}]")
    return pd.DataFrame(rows, columns=["r", "m", "n_X", "n_Y", "gh_lower", "gh_upper", "neck_diameter_upper"])


def isotropy_convergence(K1: float, K2: float, r_schedule: Sequence[float], d: float,
                         n_dirs: int = 24, seed: int = 0) -> pd.DataFrame:
    """Deviation of the measured isotropy function of M_r from F_{K1} at a
    point at distance d from the neck on side 1, over good directions."""
    schedule = _check_schedule(r_schedule)
    if any(not d > r for r in schedule):
        raise DomainError("base point must sit outside the excised ball", bound="d > r")
    rows = []
    for r in schedule:
        g = build_glued(K1, K2, r)
        space = GluedSpace(g)
        base = np.array([1.0, d, 0.0])
        W = [Ball(None, r)]
        reach = min(2.0 * d, space.max_length)
        bad = bad_directions(space, base, W, reach)
        cover = unseen_check(bad, math.pi).cover
        cap = max((c.radius for c in cover.caps), default=0.0)
        expected = invert_angle(K1, d, d, r)
        R = min(d, space.max_length)
        oracle = lambda th, s, t: law_of_cosines(K1, th, s, t)
        filtered = estimate_F(space, base, R, n_dirs, bad=bad, W=W, pair_filter=True, seed=seed)
        ray_only = estimate_F(space, base, R, n_dirs, bad=bad, seed=seed)
        rows.append({
            "r": r,
            "max_deviation": filtered.deviation_from(oracle),
            "max_deviation_ray_only": ray_only.deviation_from(oracle),
            "defect": filtered.defect,
            "cap_radius": cap,
            "expected_cap": expected,
            "cap_error": abs(cap - expected),
        })
    return pd.DataFrame(rows, columns=["r", "max_deviation", "max_deviation_ray_only", "defect",
                                       "cap_radius", "expected_cap", "cap_error"])


def ricci_violation(n: int, K1: float, K2: float, H: float, r_schedule: Sequence[float]) -> pd.DataFrame:
    """Annulus volume comparison on the wedge with r_1 = 2r:
    lhs = (V(H, 3r) - V(H, r)) / V(H, r),
    rhs = (V(K1, 3r) - V(K1, r) + V(K2, r)) / V(K1, r).
    A lower Ricci bound H would force lhs >= rhs."""
    if H > min(K1, K2):
        raise DomainError("the comparison curvature must not exceed either component",
                          bound=f"H <= min(K1, K2) = {min(K1, K2)!r}")
    rows = []
    for r in r_schedule:
        r = float(r)
        lhs = (ball_volume(n, H, 3 * r) - ball_volume(n, H, r)) / ball_volume(n, H, r)
        rhs = (ball_volume(n, K1, 3 * r) - ball_volume(n, K1, r) + ball_volume(n, K2, r)) / ball_volume(n, K1, r)
        rows.append({"n": n, "K1": K1, "K2": K2, "H": H, "r": r, "lhs": lhs, "rhs": rhs,
                     "lhs_limit": 3 ** n - 1, "rhs_limit": 3 ** n,
                     "verdict": "VIOLATED" if lhs < rhs else "consistent"})
    return pd.DataFrame(rows, columns=["n", "K1", "K2", "H", "r", "lhs", "rhs", "lhs_limit", "rhs_limit", "verdict"])
