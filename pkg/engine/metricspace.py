"""
metricspace - finite metric spaces, ball packing and Gromov-Hausdorff bounds

Samples epsilon-nets from any handle exposing net_candidates/pairwise
(SpaceFormSpace, WarpedSpace, GluedSpace, WedgeSpace), counts disjoint
balls, checks almost isometries and brackets the GH distance between two
samples from above (correspondence distortion) and below (diameter, radius
and separation-number obstructions).

Usage:
    from engine.metricspace import epsilon_net_sample, gh_upper, gh_lower
    X = epsilon_net_sample(space, center, 1.0, 0.2)
    hi, lo = gh_upper(X, Y), gh_lower(X, Y)
"""

import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy.sparse import csgraph

from engine.errors import DomainError
from engine.spaceform import ball_volume

logger = logging.getLogger(__name__)

TRIANGLE_TOL = 1e-9
TRIANGLE_EXACT_LIMIT = 500
TRIANGLE_SAMPLES = 100_000
EXACT_PACKING_LIMIT = 25
EXACT_GH_LIMIT = 60_000
NET_POOL_DIVISOR = 6
NET_SEPARATION = 0.85
ANCHORS = 32
SEPARATION_GRID = 64
SEPARATION_LIMIT = 400


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    labels: Tuple[str, ...]
    D: np.ndarray
    coords: Optional[np.ndarray] = None
    source: str = ""
    triangle_tol: float = TRIANGLE_TOL

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "labels", tuple(str(l) for l in self.labels))
        n = len(self.labels)
        if D.shape != (n, n):
            raise DomainError(f"distance matrix shape {D.shape} does not match {n} labels")
        if n == 0:
            raise DomainError("a metric space needs at least one point")
        if not np.all(np.isfinite(D)):
            raise DomainError("distance matrix has non-finite entries")
        if np.any(np.diag(D) != 0):
            raise DomainError("distance matrix must have a zero diagonal")
        if not np.array_equal(D, D.T):
            raise DomainError("distance matrix must be symmetric")
        if n > 1 and np.any(D[~np.eye(n, dtype=bool)] <= 0):
            raise DomainError("distinct points must be at positive distance", bound="d(x, y) > 0")
        self._check_triangle()

    def _check_triangle(self) -> None:
        D, n = self.D, self.n
        tol = self.triangle_tol
        if n <= TRIANGLE_EXACT_LIMIT:
            for k in range(n):
                excess = D - (D[:, k, None] + D[None, k, :])
                if np.max(excess) > tol:
                    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
                    raise DomainError(f"triangle inequality fails at ({i}, {k}, {j}) by {float(excess[i, j]):.3g}",
                                      bound=f"d(x,z) <= d(x,y) + d(y,z) + {tol:g}")
            return
        rng = np.random.default_rng(0)
        i, j, k = rng.integers(0, n, size=(3, TRIANGLE_SAMPLES))
        excess = D[i, j] - D[i, k] - D[k, j]
        if np.max(excess) > tol:
            w = int(np.argmax(excess))
            raise DomainError(f"triangle inequality fails at ({i[w]}, {k[w]}, {j[w]})",
                              bound=f"d(x,z) <= d(x,y) + d(y,z) + {tol:g}")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def diameter(self) -> float:
        return float(np.max(self.D))

    @property
    def radius(self) -> float:
        return float(np.min(np.max(self.D, axis=1)))

    def subspace(self, idx: Sequence[int]) -> "FiniteMetricSpace":
        idx = np.asarray(idx, dtype=int)
        coords = None if self.coords is None else self.coords[idx]
        return FiniteMetricSpace(tuple(self.labels[i] for i in idx), self.D[np.ix_(idx, idx)],
                                 coords, self.source, self.triangle_tol)

    def relabel(self, perm: Sequence[int]) -> "FiniteMetricSpace":
        return self.subspace(perm)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.n}\n")
        for label in self.labels:
            buf.write(f"{label}\n")
        np.savetxt(buf, self.D, fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, triangle_tol: float = TRIANGLE_TOL) -> "FiniteMetricSpace":
        lines = text.splitlines()
        try:
            n = int(lines[0].strip())
            labels = tuple(l.strip() for l in lines[1:n + 1])
            rows = [[float(v) for v in l.split()] for l in lines[n + 1:2 * n + 1]]
        except (IndexError, ValueError) as e:
            raise DomainError(f"malformed distance-matrix text: {e}")
        if len(labels) != n or len(rows) != n:
            raise DomainError("distance-matrix text is truncated")
        return cls(labels, np.array(rows), triangle_tol=triangle_tol)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path], triangle_tol: float = TRIANGLE_TOL) -> "FiniteMetricSpace":
        return cls.from_text(Path(path).read_text(), triangle_tol)


def metric_closure(D: np.ndarray) -> np.ndarray:
    """Shortest-path closure, turning near-metrics from graph approximations
    into metrics."""
    closed = csgraph.floyd_warshall(np.asarray(D, dtype=float), directed=False)
    return np.minimum(closed, closed.T)


# ========== correspondences ==========

def distortion(X: FiniteMetricSpace, Y: FiniteMetricSpace, pairs: np.ndarray, chunk: int = 256) -> float:
    """max over related pairs of |d_X(x, x') - d_Y(y, y')|."""
    xi, yi = pairs[:, 0], pairs[:, 1]
    worst = 0.0
    for start in range(0, len(pairs), chunk):
        dx = X.D[np.ix_(xi[start:start + chunk], xi)]
        dy = Y.D[np.ix_(yi[start:start + chunk], yi)]
        worst = max(worst, float(np.max(np.abs(dx - dy))))
    return worst


@dataclass(frozen=True, eq=False)
class Correspondence:
    pairs: np.ndarray
    distortion: float
    x_size: int
    y_size: int

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        object.__setattr__(self, "pairs", pairs)
        if len(np.unique(pairs[:, 0])) != self.x_size or len(np.unique(pairs[:, 1])) != self.y_size:
            raise DomainError("a correspondence must relate every point of both spaces")

    @classmethod
    def from_pairs(cls, X: FiniteMetricSpace, Y: FiniteMetricSpace, pairs) -> "Correspondence":
        pairs = np.unique(np.asarray(pairs, dtype=int).reshape(-1, 2), axis=0)
        return cls(pairs, distortion(X, Y, pairs), X.n, Y.n)

    @classmethod
    def from_maps(cls, X: FiniteMetricSpace, Y: FiniteMetricSpace, phi, psi) -> "Correspondence":
        """Graph of phi: X -> Y united with the transposed graph of psi: Y -> X."""
        pairs = np.vstack([np.column_stack([np.arange(X.n), phi]),
                           np.column_stack([psi, np.arange(Y.n)])])
        return cls.from_pairs(X, Y, pairs)

    @property
    def gh_bound(self) -> float:
        return self.distortion / 2.0


# ========== sampling ==========

def epsilon_net_sample(space, center, radius: float, epsilon: float, seed: int = 0,
                       prefix: str = "p", triangle_tol: float = TRIANGLE_TOL) -> FiniteMetricSpace:
    """Greedy epsilon-net of the ball B(center, radius).

    Candidates come from the handle's polar lattice at spacing epsilon/6;
    after the centre they are visited in a seeded random order and kept when
    at least 0.85 epsilon from every kept point. Kept points are therefore
    more than epsilon/2 apart and every ball point lies within epsilon of one.
    """
    if not epsilon > 0:
        raise DomainError("net spacing must be positive", bound="epsilon > 0")
    if radius < epsilon:
        pts, radial = space.net_candidates(center, epsilon, epsilon / NET_POOL_DIVISOR)
        pts = np.asarray(pts)[[int(np.argmin(radial))]]
        return FiniteMetricSpace((f"{prefix}0",), np.zeros((1, 1)), pts, repr(space), triangle_tol)

    pool, radial = space.net_candidates(center, radius, epsilon / NET_POOL_DIVISOR)
    pool = np.asarray(pool)
    radial = np.asarray(radial, dtype=float)
    inside = radial <= radius
    pool, radial = pool[inside], radial[inside]

    first = int(np.argmin(radial))
    rest = np.delete(np.arange(len(pool)), first)
    order = np.concatenate([[first], np.random.default_rng(seed).permutation(rest)])
    delta = NET_SEPARATION * epsilon
    kept: List[int] = []
    for idx in order:
        if kept:
            kept_arr = np.asarray(kept)
            window = kept_arr[np.abs(radial[kept_arr] - radial[idx]) < delta]
            if len(window) and np.min(space.pairwise(pool[idx:idx + 1], pool[window])) < delta:
                continue
        kept.append(int(idx))

    S = pool[np.asarray(kept)]
    D = np.asarray(space.pairwise(S, S), dtype=float)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    logger.debug(f"net of radius {radius} at spacing {epsilon}: {len(kept)} of {len(pool)} candidates")
    return FiniteMetricSpace(tuple(f"{prefix}{i}" for i in range(len(kept))), D, S, repr(space), triangle_tol)


# ========== packing ==========

def _separated_graph(D: np.ndarray, idx: np.ndarray, gap: float, strict: bool = True) -> nx.Graph:
    sub = D[np.ix_(idx, idx)]
    ok = sub > gap if strict else sub >= gap
    G = nx.Graph()
    G.add_nodes_from(range(len(idx)))
    i, j = np.nonzero(np.triu(ok, 1))
    G.add_edges_from(zip(i.tolist(), j.tolist()))
    return G


def _clique_bounds(G: nx.Graph, exact_limit: int = EXACT_PACKING_LIMIT) -> Tuple[int, int]:
    """(lower, upper) on the clique number; equal when the graph is small."""
    n = G.number_of_nodes()
    if n == 0:
        return 0, 0
    if n <= exact_limit:
        clique, _ = nx.max_weight_clique(G, weight=None)
        return len(clique), len(clique)
    # greedy clique by degree order
    clique: List[int] = []
    for v in sorted(G.nodes, key=lambda v: (-G.degree[v], v)):
        if all(G.has_edge(v, u) for u in clique):
            clique.append(v)
    colours = nx.greedy_color(G, strategy="largest_first")
    return len(clique), max(colours.values()) + 1


def packing_bounds(X: FiniteMetricSpace, s: float, t: float, center: int) -> Tuple[int, int]:
    """(lower, upper) on the number of disjoint s-balls inside B(center, t)."""
    if s <= 0:
        raise DomainError("packing radius must be positive", bound="s > 0")
    if s >= t:
        return 1, 1
    idx = np.nonzero(X.D[center] <= t - s)[0]
    return _clique_bounds(_separated_graph(X.D, idx, 2.0 * s))


def packing_number(X: FiniteMetricSpace, s: float, t: float, center: int) -> int:
    """Largest set of points within t - s of center, pairwise more than 2s
    apart. Exact up to EXACT_PACKING_LIMIT candidates, a greedy lower bound
    above. s >= t counts the centre's own ball and returns 1."""
    lower, upper = packing_bounds(X, s, t, center)
    if lower != upper:
        logger.debug(f"packing({s}, {t}) at {center}: certificate [{lower}, {upper}]")
    return lower


@dataclass(frozen=True, eq=False)
class PackingTable:
    """Packing counts maximised over sampled centres: the approximation of
    the f ball packing function on a finite sample."""
    s_values: np.ndarray
    t_values: np.ndarray
    counts: np.ndarray
    upper: np.ndarray
    centers: Tuple[int, ...] = ()

    def lookup(self, s: float, t: float) -> int:
        """Conservative value: grid s at or below s, grid t at or above t."""
        si = np.nonzero(self.s_values <= s * (1 + 1e-12))[0]
        ti = np.nonzero(self.t_values >= t * (1 - 1e-12))[0]
        if len(si) == 0 or len(ti) == 0:
            raise DomainError(f"packing table does not cover (s={s!r}, t={t!r})",
                              bound=f"{self.s_values.min()!r} <= s, t <= {self.t_values.max()!r}")
        return int(self.upper[si[-1], ti[0]])

    def scaled(self, factor: float) -> "PackingTable":
        counts = np.maximum(1, np.floor(self.counts * factor)).astype(int)
        upper = np.maximum(1, np.floor(self.upper * factor)).astype(int)
        return PackingTable(self.s_values, self.t_values, counts, upper, self.centers)


def packing_table(X: FiniteMetricSpace, s_values: Sequence[float], t_values: Sequence[float],
                  centers: Optional[Sequence[int]] = None, n_centers: int = 16, seed: int = 0) -> PackingTable:
    if centers is None:
        rng = np.random.default_rng(seed)
        centers = sorted(rng.choice(X.n, size=min(n_centers, X.n), replace=False).tolist())
    s_values = np.asarray(sorted(s_values), dtype=float)
    t_values = np.asarray(sorted(t_values), dtype=float)
    counts = np.zeros((len(s_values), len(t_values)), dtype=int)
    upper = np.zeros_like(counts)
    for i, s in enumerate(s_values):
        for j, t in enumerate(t_values):
            for c in centers:
                lo, hi = packing_bounds(X, float(s), float(t), int(c))
                counts[i, j] = max(counts[i, j], lo)
                upper[i, j] = max(upper[i, j], hi)
    return PackingTable(s_values, t_values, counts, upper, tuple(int(c) for c in centers))


def bishop_gromov_ceiling(n: int, H: float, s: float, t: float) -> float:
    """V(n, H, t) / V(n, H, s)."""
    return ball_volume(n, H, t) / ball_volume(n, H, s)


# ========== almost isometries ==========

@dataclass
class AlmostIsometryReport:
    passed: bool
    epsilon: float
    distortion: float
    onto_gap: float
    worst_pair: Optional[Tuple[int, int]] = None
    worst_point: Optional[int] = None

    @property
    def violation(self) -> Optional[str]:
        if self.passed:
            return None
        if self.distortion >= self.epsilon:
            return f"distance not preserved at pair {self.worst_pair}"
        return f"point {self.worst_point} of Y is not within epsilon of the image"


def check_almost_isometry(phi: Sequence[int], X: FiniteMetricSpace, Y: FiniteMetricSpace,
                          epsilon: float) -> AlmostIsometryReport:
    phi = np.asarray(phi, dtype=int)
    if phi.shape != (X.n,):
        raise DomainError("the map must be defined on every point of X")
    dev = np.abs(Y.D[np.ix_(phi, phi)] - X.D)
    i, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
    dist = float(dev[i, j])
    reach = np.min(Y.D[:, np.unique(phi)], axis=1)
    far = int(np.argmax(reach))
    gap = float(reach[far])
    return AlmostIsometryReport(
        passed=dist < epsilon and gap < epsilon,
        epsilon=epsilon,
        distortion=dist,
        onto_gap=gap,
        worst_pair=(int(i), int(j)),
        worst_point=far,
    )


# ========== GH upper bound ==========

def _profile_match(DX: np.ndarray, DY: np.ndarray, x0: int) -> int:
    """Point of Y whose sorted distance profile best matches that of x0."""
    q = np.linspace(0.0, 1.0, 33)
    px = np.quantile(DX[x0], q)
    py = np.quantile(DY, q, axis=1).T
    return int(np.argmin(np.max(np.abs(py - px[None, :]), axis=1)))


def _farthest_order(D: np.ndarray, start: int) -> np.ndarray:
    n = len(D)
    order = [start]
    dist = D[start].copy()
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        order.append(nxt)
        dist = np.minimum(dist, D[nxt])
    return np.asarray(order)


def _greedy_map(DX: np.ndarray, DY: np.ndarray, x0: int, y0: int) -> np.ndarray:
    """Map X -> Y built in farthest-point order, each point matched against
    the first ANCHORS already-placed points."""
    order = _farthest_order(DX, x0)
    phi = np.full(len(DX), -1)
    phi[x0] = y0
    anchors = [x0]
    for x in order[1:]:
        a = np.asarray(anchors)
        cost = np.max(np.abs(DY[:, phi[a]] - DX[x, a][None, :]), axis=1)
        phi[x] = int(np.argmin(cost))
        if len(anchors) < ANCHORS:
            anchors.append(int(x))
    return phi


def _row_costs(X: FiniteMetricSpace, Y: FiniteMetricSpace, pairs: np.ndarray, chunk: int = 256) -> np.ndarray:
    xi, yi = pairs[:, 0], pairs[:, 1]
    out = np.empty(len(pairs))
    for start in range(0, len(pairs), chunk):
        dx = X.D[np.ix_(xi[start:start + chunk], xi)]
        dy = Y.D[np.ix_(yi[start:start + chunk], yi)]
        out[start:start + chunk] = np.max(np.abs(dx - dy), axis=1)
    return out


def _improve(X: FiniteMetricSpace, Y: FiniteMetricSpace, pairs: np.ndarray, moves: int) -> np.ndarray:
    """Reassign the worst pair's Y end while its row cost strictly drops."""
    pairs = pairs.copy()
    for _ in range(moves):
        xi, yi = pairs[:, 0], pairs[:, 1]
        row_cost = _row_costs(X, Y, pairs)
        p = int(np.argmax(row_cost))
        x = pairs[p, 0]
        others = np.delete(np.arange(len(pairs)), p)
        cost = np.max(np.abs(Y.D[:, yi[others]] - X.D[x, xi[others]][None, :]), axis=1)
        y_new = int(np.argmin(cost))
        if cost[y_new] >= row_cost[p] - 1e-15:
            break
        trial = pairs.copy()
        trial[p, 1] = y_new
        if len(np.unique(trial[:, 1])) < Y.n:
            break
        pairs = trial
    return pairs


def _exact_correspondence(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> Correspondence:
    best = None
    for phi in itertools.product(range(Y.n), repeat=X.n):
        for psi in itertools.product(range(X.n), repeat=Y.n):
            corr = Correspondence.from_maps(X, Y, np.asarray(phi), np.asarray(psi))
            if best is None or corr.distortion < best.distortion:
                best = corr
    return best


def gh_correspondence(X: FiniteMetricSpace, Y: FiniteMetricSpace, effort: int = 8, seed: int = 0,
                      hints: Iterable[np.ndarray] = (), threads: int = 1) -> Correspondence:
    """Best correspondence found between X and Y; deterministic for a seed."""
    if X.n == 1 or Y.n == 1:
        pairs = np.array([[i, j] for i in range(X.n) for j in range(Y.n)])
        return Correspondence.from_pairs(X, Y, pairs)
    # compared in log space: the raw count overflows a float past ~140 points
    if X.n * math.log(Y.n) + Y.n * math.log(X.n) <= math.log(EXACT_GH_LIMIT):
        return _exact_correspondence(X, Y)

    def restart(k: int) -> Correspondence:
        rng = np.random.default_rng(seed + k)
        x0 = int(np.argmax(np.max(X.D, axis=1))) if k == 0 else int(rng.integers(X.n))
        y0 = _profile_match(X.D, Y.D, x0)
        phi = _greedy_map(X.D, Y.D, x0, y0)
        psi = _greedy_map(Y.D, X.D, y0, x0)
        pairs = np.vstack([np.column_stack([np.arange(X.n), phi]),
                           np.column_stack([psi, np.arange(Y.n)])])
        pairs = _improve(X, Y, np.unique(pairs, axis=0), moves=effort)
        return Correspondence.from_pairs(X, Y, pairs)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        candidates = list(pool.map(restart, range(effort)))
    for hint in hints:
        hinted = np.unique(np.asarray(hint, dtype=int).reshape(-1, 2), axis=0)
        candidates.append(Correspondence.from_pairs(X, Y, _improve(X, Y, hinted, moves=effort)))
    return min(candidates, key=lambda c: c.distortion)


def gh_upper(X: FiniteMetricSpace, Y: FiniteMetricSpace, effort: int = 8, seed: int = 0,
             hints: Iterable[np.ndarray] = (), threads: int = 1) -> float:
    """Half the distortion of the best correspondence found."""
    return gh_correspondence(X, Y, effort, seed, hints, threads).gh_bound


# ========== GH lower bound ==========

def _separation_counts(D: np.ndarray, gaps: np.ndarray, strict: bool) -> Tuple[np.ndarray, np.ndarray]:
    lower = np.empty(len(gaps), dtype=int)
    upper = np.empty(len(gaps), dtype=int)
    idx = np.arange(len(D))
    for k, gap in enumerate(gaps):
        if gap <= 0 and strict:
            lower[k] = upper[k] = len(D)
            continue
        lower[k], upper[k] = _clique_bounds(_separated_graph(D, idx, gap, strict))
    return lower, upper


def _grid(D: np.ndarray) -> np.ndarray:
    values = np.unique(D[np.triu_indices(len(D), 1)])
    if len(values) > SEPARATION_GRID:
        values = np.unique(np.quantile(values, np.linspace(0.0, 1.0, SEPARATION_GRID)))
    return values


def _separation_bound(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    """If X holds N points pairwise >= a apart while every set of Y points
    pairwise > b apart has fewer than N, then d_GH >= (a - b)/2."""
    if X.n < 2:
        return 0.0
    a_grid = _grid(X.D)
    b_grid = np.concatenate([[0.0], _grid(Y.D)]) if Y.n > 1 else np.array([0.0])
    n_x, _ = _separation_counts(X.D, a_grid - 1e-9, strict=True)
    _, n_y = _separation_counts(Y.D, b_grid, strict=True)
    best = 0.0
    for a, count in zip(a_grid, n_x):
        ok = (b_grid < a) & (n_y < count)
        if np.any(ok):
            best = max(best, (a - float(np.min(b_grid[ok]))) / 2.0)
    return best


def gh_lower(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    bound = max(abs(X.diameter - Y.diameter) / 2.0, abs(X.radius - Y.radius) / 2.0)
    if max(X.n, Y.n) <= SEPARATION_LIMIT:
        bound = max(bound, _separation_bound(X, Y), _separation_bound(Y, X))
    return float(bound)
