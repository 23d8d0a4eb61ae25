"""
isotropy - measured isotropy functions, bad directions and unseen caps

Works against any geodesic handle (SpaceFormSpace, WarpedSpace, GluedSpace):
shoots direction pairs from a base point, measures endpoint distances per
(theta, s, t) cell, and reports the spread of those distances as the
defect. Directions whose geodesics meet a bad region W are sampled on a
uniform grid of the circle of directions and covered by caps.

Usage:
    from engine.isotropy import estimate_F, verify_axioms
    est = estimate_F(space, base, R=1.0, n_dirs=24)
    report = verify_axioms(est, 1.0)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd

from engine.errors import DomainError, InsufficientDirectionsError
from engine.geom_util import TWO_PI, circular_distance
from engine.metricspace import PackingTable

logger = logging.getLogger(__name__)

DIRECTION_GRID = 1440
THETA_STEPS = 17
GRAZE_TOL = 1e-9
FRACT_MAX_K = 8


class GeodesicSpace(Protocol):
    max_length: float

    def shoot(self, base, alphas, lengths) -> np.ndarray: ...

    def distances(self, E1, E2) -> np.ndarray: ...

    def ray_clearance(self, base, alphas, R: float, center) -> np.ndarray: ...

    def chord_clearance(self, E1, E2, center) -> np.ndarray: ...

    def base_row(self, p) -> np.ndarray: ...


@dataclass(frozen=True)
class Ball:
    """Metric ball B(center, radius) used as a bad region; center None means
    the excised ball of a glued manifold."""
    center: Any
    radius: float


# ========== estimates ==========

@dataclass
class IsotropyEstimate:
    theta_grid: np.ndarray
    radii_grid: np.ndarray
    F_hat: np.ndarray
    spread: np.ndarray
    samples_per_cell: np.ndarray
    defect: float
    R: float
    radial_error: float = 0.0
    pair_filter: bool = False

    def cells(self):
        for i, th in enumerate(self.theta_grid):
            for a, s in enumerate(self.radii_grid):
                for b, t in enumerate(self.radii_grid):
                    yield (i, a, b), float(th), float(s), float(t)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for (i, a, b), th, s, t in self.cells():
            if self.samples_per_cell[i, a, b] == 0:
                continue
            rows.append({"theta": th, "s": s, "t": t, "F_hat": float(self.F_hat[i, a, b]),
                         "spread": float(self.spread[i, a, b]), "n_samples": int(self.samples_per_cell[i, a, b])})
        return pd.DataFrame(rows, columns=["theta", "s", "t", "F_hat", "spread", "n_samples"])

    def to_csv(self, path=None) -> Optional[str]:
        return self.to_frame().to_csv(path, index=False, float_format="%.12g")

    def diagonal(self, theta: float) -> np.ndarray:
        """F_hat(theta, t, t) over the radii grid, interpolated in theta."""
        diag = self.F_hat[:, np.arange(len(self.radii_grid)), np.arange(len(self.radii_grid))]
        return np.array([np.interp(theta, self.theta_grid, diag[:, k]) for k in range(len(self.radii_grid))])

    def deviation_from(self, oracle) -> float:
        """max |F_hat - oracle(theta, s, t)| over populated cells."""
        th, s, t = np.meshgrid(self.theta_grid, self.radii_grid, self.radii_grid, indexing="ij")
        ref = oracle(th, s, t)
        mask = self.samples_per_cell > 0
        return float(np.max(np.abs(self.F_hat - ref)[mask])) if np.any(mask) else 0.0


def _direction_offsets(n_dirs: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.mod(rng.uniform(0.0, TWO_PI) + TWO_PI * np.arange(n_dirs) / n_dirs, TWO_PI)


def estimate_F(space: GeodesicSpace, p, R: float, n_dirs: int = 24,
               radii_grid: Optional[Sequence[float]] = None,
               theta_grid: Optional[Sequence[float]] = None,
               bad: Optional["BadDirectionSet"] = None,
               W: Sequence[Ball] = (),
               pair_filter: bool = False,
               seed: int = 0) -> IsotropyEstimate:
    """Mean and spread of d(exp_p(s v), exp_p(t w)) over direction pairs with
    angle theta, for every grid cell.

    Pairs with a direction in `bad` are dropped. With pair_filter, pairs
    whose connecting geodesic meets a ball of W are dropped as well.
    """
    if not 0 < R <= space.max_length:
        raise DomainError(f"radius {R!r} outside the shooting range", bound=f"0 < R <= {space.max_length!r}")
    theta_grid = np.linspace(0.0, math.pi, THETA_STEPS) if theta_grid is None else np.asarray(theta_grid, float)
    radii_grid = np.linspace(R / 4.0, R, 4) if radii_grid is None else np.asarray(radii_grid, float)
    if np.any(radii_grid <= 0) or np.any(radii_grid > R * (1 + 1e-12)):
        raise DomainError("radii must lie in (0, R]", bound="0 < s, t <= R")

    alphas = _direction_offsets(n_dirs, seed)
    n_th, n_r = len(theta_grid), len(radii_grid)
    F_hat = np.zeros((n_th, n_r, n_r))
    spread = np.zeros_like(F_hat)
    count = np.zeros(F_hat.shape, dtype=int)

    good_first = np.ones(n_dirs, dtype=bool) if bad is None else ~bad.contains(alphas)
    E1 = np.asarray(space.shoot(p, alphas, radii_grid))
    for i, theta in enumerate(theta_grid):
        second = np.mod(alphas + theta, TWO_PI)
        ok = good_first if bad is None else good_first & ~bad.contains(second)
        if not np.any(ok):
            raise InsufficientDirectionsError(
                f"no direction pair at theta={theta:.4g} avoids the bad set",
                bound=f"at least one good pair among {n_dirs}")
        E2 = np.asarray(space.shoot(p, second[ok], radii_grid))
        for a in range(n_r):
            for b in range(n_r):
                d = np.asarray(space.distances(E1[ok, a], E2[:, b]))
                keep = np.ones(len(d), dtype=bool)
                if pair_filter:
                    for ball in W:
                        keep &= np.asarray(space.chord_clearance(E1[ok, a], E2[:, b], ball.center)) > ball.radius + GRAZE_TOL
                d = d[keep]
                count[i, a, b] = len(d)
                if len(d):
                    F_hat[i, a, b] = float(np.mean(d))
                    spread[i, a, b] = float(np.max(d) - np.min(d))

    populated = count > 0
    defect = float(np.max(spread[populated])) if np.any(populated) else 0.0

    ends = np.asarray(space.shoot(p, alphas[good_first], [R]))[:, 0]
    base = np.repeat(np.asarray(space.base_row(p), dtype=float)[None, :], len(ends), axis=0)
    radial = np.asarray(space.distances(base, ends))
    radial_error = float(np.max(np.abs(radial - R))) if len(radial) else 0.0
    logger.debug(f"isotropy estimate: {n_th}x{n_r}x{n_r} cells, defect {defect:.3g}")
    return IsotropyEstimate(theta_grid, radii_grid, F_hat, spread, count, defect, float(R), radial_error, pair_filter)


def cross_point_spread(estimates: Sequence[IsotropyEstimate]) -> float:
    """Largest difference of F_hat between base points over shared cells."""
    if len(estimates) < 2:
        return 0.0
    stack = np.stack([e.F_hat for e in estimates])
    mask = np.all(np.stack([e.samples_per_cell > 0 for e in estimates]), axis=0)
    if not np.any(mask):
        return 0.0
    return float(np.max((stack.max(axis=0) - stack.min(axis=0))[mask]))


# ========== axioms ==========

@dataclass
class AxiomReport:
    tolerance: float
    checks: Dict[str, bool] = field(default_factory=dict)
    violations: List[Tuple[str, Tuple[int, ...], str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def flag(self, check: str, cell: Tuple[int, ...], detail: str) -> None:
        self.checks[check] = False
        self.violations.append((check, cell, detail))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{"check": k, "passed": v} for k, v in self.checks.items()],
                            columns=["check", "passed"])


def verify_axioms(est: IsotropyEstimate, R: float) -> AxiomReport:
    """Monotonicity in theta, F(pi, t, t) > t, F(0, 0, R) = R, triangle
    chaining over the theta grid and F(pi/k, t, t) > t/k, each within
    max(2 defect, 1e-9)."""
    tol = max(2.0 * est.defect, 1e-9)
    report = AxiomReport(tol)
    for name in ("monotone", "antipodal", "radial", "chaining", "fractional"):
        report.checks[name] = True
    F, n = est.F_hat, est.samples_per_cell
    n_th, n_r = len(est.theta_grid), len(est.radii_grid)

    for a in range(n_r):
        for b in range(n_r):
            for i in range(n_th - 1):
                if n[i, a, b] and n[i + 1, a, b] and F[i + 1, a, b] < F[i, a, b] - tol:
                    report.flag("monotone", (i + 1, a, b),
                                f"F_hat drops from {F[i, a, b]:.6g} to {F[i + 1, a, b]:.6g}")

    if abs(est.theta_grid[-1] - math.pi) < 1e-12:
        for k, t in enumerate(est.radii_grid):
            if n[-1, k, k] and not F[-1, k, k] > t - tol:
                report.flag("antipodal", (n_th - 1, k, k), f"F_hat(pi, t, t) = {F[-1, k, k]:.6g} <= t = {t:.6g}")

    if abs(est.R - R) > 1e-12 * max(1.0, R) or est.radial_error > tol:
        report.flag("radial", (), f"|d(p, exp_p(R v)) - R| = {est.radial_error:.3g}")

    # theta_i + theta_j = theta_(i+j) on a uniform grid
    uniform = np.allclose(np.diff(est.theta_grid), est.theta_grid[1] - est.theta_grid[0]) and est.theta_grid[0] == 0
    if uniform:
        for k in range(n_r):
            for i in range(1, n_th):
                for j in range(i, n_th - i):
                    if n[i, k, k] and n[j, k, k] and n[i + j, k, k] and \
                            F[i + j, k, k] > F[i, k, k] + F[j, k, k] + tol:
                        report.flag("chaining", (i, j, k),
                                    f"F_hat(theta_{i + j}) exceeds F_hat(theta_{i}) + F_hat(theta_{j})")

    for kk in range(1, FRACT_MAX_K + 1):
        theta = math.pi / kk
        diag = est.diagonal(theta)
        for k, t in enumerate(est.radii_grid):
            if not diag[k] > t / kk - tol:
                report.flag("fractional", (kk, k), f"F_hat(pi/{kk}, t, t) = {diag[k]:.6g} <= t/{kk}")
    return report


# ========== bad directions and caps ==========

@dataclass(frozen=True, eq=False)
class BadDirectionSet:
    mask: np.ndarray

    @property
    def grid_size(self) -> int:
        return len(self.mask)

    @property
    def step(self) -> float:
        return TWO_PI / self.grid_size

    @property
    def alphas(self) -> np.ndarray:
        return np.arange(self.grid_size) * self.step

    @property
    def fraction(self) -> float:
        return float(np.mean(self.mask))

    def __len__(self) -> int:
        return int(np.count_nonzero(self.mask))

    def contains(self, alphas) -> np.ndarray:
        """True where either neighbouring grid direction is bad."""
        pos = np.mod(np.asarray(alphas, dtype=float), TWO_PI) / self.step
        lo = np.floor(pos).astype(int) % self.grid_size
        hi = (lo + 1) % self.grid_size
        return self.mask[lo] | self.mask[hi]

    @classmethod
    def empty(cls, grid_size: int = DIRECTION_GRID) -> "BadDirectionSet":
        return cls(np.zeros(grid_size, dtype=bool))

    @classmethod
    def from_caps(cls, caps: Sequence[Tuple[float, float]], grid_size: int = DIRECTION_GRID) -> "BadDirectionSet":
        alphas = np.arange(grid_size) * (TWO_PI / grid_size)
        mask = np.zeros(grid_size, dtype=bool)
        for center, radius in caps:
            mask |= circular_distance(alphas, center) <= radius
        return cls(mask)

    def runs(self) -> List[Tuple[int, int]]:
        """Maximal circular runs of bad grid indices as (start, length)."""
        n = self.grid_size
        if not np.any(self.mask):
            return []
        if np.all(self.mask):
            return [(0, n)]
        start = int(np.argmin(self.mask))
        rolled = np.roll(self.mask, -start)
        out = []
        i = 0
        while i < n:
            if rolled[i]:
                j = i
                while j < n and rolled[j]:
                    j += 1
                out.append(((start + i) % n, j - i))
                i = j
            else:
                i += 1
        return out


def bad_directions(space: GeodesicSpace, p, W: Sequence[Ball], R: float,
                   grid_size: int = DIRECTION_GRID) -> BadDirectionSet:
    """Grid directions whose geodesic of length R meets W; grazing counts."""
    mask = np.zeros(grid_size, dtype=bool)
    alphas = np.arange(grid_size) * (TWO_PI / grid_size)
    for ball in W:
        clearance = np.asarray(space.ray_clearance(p, alphas, R, ball.center))
        mask |= clearance <= ball.radius + GRAZE_TOL
    return BadDirectionSet(mask)


@dataclass(frozen=True)
class Cap:
    center: float
    radius: float


@dataclass
class DirectionCapCover:
    caps: List[Cap]
    covered: BadDirectionSet

    def tripled_disjoint(self) -> bool:
        for i in range(len(self.caps)):
            for j in range(i + 1, len(self.caps)):
                a, b = self.caps[i], self.caps[j]
                if not circular_distance(a.center, b.center) > 3 * a.radius + 3 * b.radius:
                    return False
        return True


@dataclass
class UnseenResult:
    passed: bool
    cover: DirectionCapCover
    violation: Optional[str] = None


def _merge(a: Cap, b: Cap) -> Cap:
    """Smallest arc holding both caps, b following a counterclockwise."""
    start = a.center - a.radius
    end = b.center + b.radius
    while end < start:
        end += TWO_PI
    span = end - start
    if span >= TWO_PI:
        return Cap(math.pi, math.pi)
    return Cap(float(np.mod(start + span / 2.0, TWO_PI)), span / 2.0)


def unseen_check(S: BadDirectionSet, epsilon: float) -> UnseenResult:
    """Cover S by caps from its runs, merging neighbours whose tripled caps
    meet; succeed when every radius is below epsilon and the tripled caps are
    pairwise disjoint."""
    step = S.step
    caps = [Cap(float(np.mod((start + (length - 1) / 2.0) * step, TWO_PI)), length * step / 2.0)
            for start, length in S.runs()]
    caps.sort(key=lambda c: c.center)
    merged = True
    while merged and len(caps) > 1:
        merged = False
        for i in range(len(caps)):
            j = (i + 1) % len(caps)
            a, b = caps[i], caps[j]
            if circular_distance(a.center, b.center) <= 3 * a.radius + 3 * b.radius:
                cap = min(_merge(a, b), _merge(b, a), key=lambda c: c.radius)
                caps = [c for k, c in enumerate(caps) if k not in (i, j)] + [cap]
                caps.sort(key=lambda c: c.center)
                merged = True
                break
    cover = DirectionCapCover(caps, S)
    big = [c for c in caps if not c.radius < epsilon]
    if big:
        return UnseenResult(False, cover, f"cap radius {big[0].radius:.6g} is not below epsilon={epsilon!r}")
    if not cover.tripled_disjoint():
        return UnseenResult(False, cover, "tripled caps are not disjoint")
    return UnseenResult(True, cover)


# ========== packing-driven threshold ==========

@dataclass
class Est2Report:
    passed: bool
    theta_bound: float
    packing: int
    worst: float
    violations: List[Tuple[float, float, float]] = field(default_factory=list)


def est2_predicate(est: IsotropyEstimate, table: PackingTable, R: float, h: float) -> Est2Report:
    """F_hat(theta, t, t) < h for every grid t and every grid theta below
    pi / (2 f(h/2, R + h/2))."""
    f = table.lookup(h / 2.0, R + h / 2.0)
    theta_bound = math.pi / (2.0 * f)
    report = Est2Report(True, theta_bound, f, 0.0)
    for i, theta in enumerate(est.theta_grid):
        if not theta < theta_bound:
            continue
        for k, t in enumerate(est.radii_grid):
            if t > R or not est.samples_per_cell[i, k, k]:
                continue
            value = float(est.F_hat[i, k, k])
            report.worst = max(report.worst, value)
            if not value < h:
                report.passed = False
                report.violations.append((float(theta), float(t), value))
    return report


def est2_epsilon_bound(table: PackingTable, R: float, h: float) -> float:
    """min(h/2, pi / (4 f(h/2, R + h/2)))."""
    return min(h / 2.0, math.pi / (4.0 * table.lookup(h / 2.0, R + h / 2.0)))
