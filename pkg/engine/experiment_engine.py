"""
ExperimentEngine - main controller

Resolves an experiment config against the parameter rules, runs the
experiment's rows on a thread pool and writes the result tables, each with
a provenance header, plus a metadata file. Outputs are rendered in memory
first, so a failed run writes nothing.

Usage:
    from engine.experiment_engine import ExperimentEngine, load_config
    engine = ExperimentEngine(load_config(path), rules, threads=4)
    paths = await engine.run(Path('out'))
"""

import asyncio
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from engine import __version__
from engine.errors import ConfigError, DomainError, IsolabError, PreconditionError
from engine.geom_util import config_digest, get_current_time
from engine.isotropy import (
    Ball,
    bad_directions,
    cross_point_spread,
    estimate_F,
    unseen_check,
    verify_axioms,
)
from engine.metricspace import (
    FiniteMetricSpace,
    bishop_gromov_ceiling,
    epsilon_net_sample,
    gh_lower,
    gh_upper,
    packing_table,
)
from engine.neck import M_RULE, GluedSpace, build_glued
from engine.parameter_rules import ParameterRules
from engine.spaceform import (
    SpaceFormParams,
    SpaceFormSpace,
    invert_angle,
    law_of_cosines,
    origin,
    random_point,
)
from engine.warped import WarpedPoint, WarpedSpace, build_ballchange, space_form_profile
from engine.wedge import convergence_experiment, isotropy_convergence, ricci_violation

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'config'
RULES_PATH = CONFIG_DIR / 'parameter_rules.json'
FLOAT_FORMAT = '%.12g'

# column order of every table, per experiment
TABLES: Dict[str, Dict[str, List[str]]] = {
    'fk-table': {
        'fk_table': ['K', 'theta', 's', 't', 'F', 'theta_inverted', 'roundtrip_error'],
    },
    'isotropy': {
        'isotropy': ['base', 'theta', 's', 't', 'F_hat', 'spread', 'n_samples'],
        'isotropy_axioms': ['base', 'check', 'passed'],
        'isotropy_convergence': ['r', 'max_deviation', 'max_deviation_ray_only', 'defect',
                                 'cap_radius', 'expected_cap', 'cap_error'],
        'unseen_caps': ['cap', 'center', 'radius', 'epsilon', 'passed'],
    },
    'ghdist': {
        'ghdist': ['n_X', 'n_Y', 'diam_X', 'diam_Y', 'gh_lower', 'gh_upper'],
    },
    'converge': {
        'converge': ['r', 'm', 'n_X', 'n_Y', 'gh_lower', 'gh_upper', 'neck_diameter_upper'],
    },
    'ricci-check': {
        'ricci_check': ['n', 'K1', 'K2', 'H', 'r', 'lhs', 'rhs', 'lhs_limit', 'rhs_limit', 'verdict'],
    },
    'packing': {
        'packing': ['s', 't', 'packing', 'packing_upper', 'ceiling', 'exceeds'],
    },
}

COLUMN_NOTES = {
    'K': 'curvature of the space form',
    'theta': 'angle between the two geodesics at the base point',
    's': 'length of the first geodesic (packing: radius of the small balls)',
    't': 'length of the second geodesic (packing: radius of the enclosing ball)',
    'F': 'endpoint distance from the law of cosines',
    'theta_inverted': 'angle recovered from F by inversion',
    'roundtrip_error': '|theta_inverted - theta|',
    'base': 'index of the base point',
    'F_hat': 'mean measured endpoint distance over direction pairs',
    'spread': 'max - min of the measured distances in the cell',
    'n_samples': 'direction pairs measured in the cell',
    'check': 'axiom of the isotropy function',
    'passed': 'whether the check holds within tolerance',
    'r': 'excision radius of the glued manifold',
    'max_deviation': 'max |F_hat - F_K1| over cells, pairs avoiding the excised ball',
    'max_deviation_ray_only': 'max |F_hat - F_K1| over cells, only rays filtered',
    'defect': 'largest in-cell spread of measured distances',
    'cap_radius': 'largest measured bad-direction cap radius',
    'expected_cap': 'cap radius predicted by angle inversion',
    'cap_error': '|cap_radius - expected_cap|',
    'cap': 'index of the bad-direction cap',
    'center': 'centre angle of the cap',
    'radius': 'angular radius of the cap',
    'epsilon': 'threshold the cap radii must stay below',
    'n_X': 'points in the first sample',
    'n_Y': 'points in the second sample',
    'diam_X': 'diameter of the first sample',
    'diam_Y': 'diameter of the second sample',
    'gh_lower': 'lower bound on the Gromov-Hausdorff distance',
    'gh_upper': 'upper bound on the Gromov-Hausdorff distance',
    'm': 'neck mass parameter',
    'neck_diameter_upper': 'explicit path-length bound on the neck diameter',
    'n': 'dimension',
    'K1': 'curvature of component 1',
    'K2': 'curvature of component 2',
    'H': 'assumed lower curvature bound',
    'lhs': 'annulus-to-ball volume ratio in the comparison space',
    'rhs': 'annulus-to-ball volume ratio on the wedge',
    'lhs_limit': 'small-radius limit of lhs (3^n - 1)',
    'rhs_limit': 'small-radius limit of rhs (3^n)',
    'verdict': 'VIOLATED when lhs < rhs',
    'packing': 'disjoint s-balls found inside a t-ball (certified)',
    'packing_upper': 'upper certificate on the packing number',
    'ceiling': 'volume-comparison ceiling V(H, t) / V(H, s)',
    'exceeds': 'packing above the ceiling',
}

Table = Tuple[str, pd.DataFrame]


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            config = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e}")
    if not isinstance(config, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config


def default_config_path(experiment: str) -> Path:
    return CONFIG_DIR / f"{experiment.replace('-', '_')}.json"


def column_help(experiment: str) -> str:
    return '\n'.join(f"{name}.csv: {','.join(cols)}" for name, cols in TABLES[experiment].items())


def render_table(frame: pd.DataFrame, header: Sequence[str]) -> str:
    lines = [f"# {line}" for line in header]
    lines += [f"# column {c}: {COLUMN_NOTES.get(c, '')}" for c in frame.columns]
    return '\n'.join(lines) + '\n' + frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'item'):
        return value.item()
    return str(value)


# ========== row computations ==========

def fk_rows(K: float, thetas: np.ndarray, radii: Sequence[float]) -> pd.DataFrame:
    rows = []
    for s in radii:
        for t in radii:
            F = law_of_cosines(K, thetas, np.full(len(thetas), s), np.full(len(thetas), t))
            for theta, d in zip(thetas, F):
                inverted = invert_angle(K, s, t, float(d))
                rows.append({'K': K, 'theta': float(theta), 's': s, 't': t, 'F': float(d),
                             'theta_inverted': inverted, 'roundtrip_error': abs(inverted - float(theta))})
    return pd.DataFrame(rows)


class ExperimentEngine:
    def __init__(self, config: Dict[str, Any], rules: Optional[ParameterRules] = None, threads: int = 1):
        # validate config
        if not isinstance(config, dict) or 'experiment' not in config:
            raise ConfigError("Invalid configuration: missing 'experiment' key")
        unknown = sorted(set(config) - {'experiment', 'seed', 'parameters'})
        if unknown:
            raise ConfigError(f"Invalid configuration: unknown key(s) {', '.join(unknown)}")
        seed = config.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"Invalid configuration: seed must be a non-negative integer, got {seed!r}")
        if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
            raise ConfigError(f"thread count must be a positive integer, got {threads!r}")

        self.rules = rules if rules is not None else ParameterRules.from_file(RULES_PATH)
        self.experiment = config['experiment']
        self.parameters = self.rules.evaluate(self.experiment, config.get('parameters', {}))
        self.seed = seed
        self.threads = threads
        self.config = {'experiment': self.experiment, 'seed': self.seed, 'parameters': self.parameters}
        self.digest = config_digest(self.config)
        logger.info('✓ Configuration loaded successfully')
        logger.info(f"  - experiment: {self.experiment}")
        logger.info(f"  - {len(self.parameters)} parameters resolved")

        self._handlers: Dict[str, Callable] = {
            'fk-table': self._fk_table,
            'isotropy': self._isotropy,
            'ghdist': self._ghdist,
            'converge': self._converge,
            'ricci-check': self._ricci_check,
            'packing': self._packing,
        }
        self._executor: Optional[ThreadPoolExecutor] = None

        self.stats = {
            'rows_computed': 0,
            'rows_failed': 0,
            'files_written': 0,
            'elapsed_ms': 0,
        }

        logger.info('✓ ExperimentEngine ready')
        logger.info(f"  - seed: {self.seed}")
        logger.info(f"  - threads: {self.threads}")

    def header_lines(self) -> List[str]:
        return [
            f"isolab {__version__}",
            f"config_sha256: {self.digest}",
            f"seed: {self.seed}",
            f"experiment: {self.experiment}",
        ]

    async def run(self, out_dir: Union[str, Path]) -> List[Path]:
        """
        Run the experiment and write its artifacts

        Args:
            out_dir: directory for the CSV tables and the metadata file

        Returns:
            paths written, tables first
        """
        start = get_current_time()
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            self._executor = executor
            try:
                tables, extra = await self._handlers[self.experiment]()
            except IsolabError as e:
                logger.error(f"✗ {self.experiment} failed: {e}")
                raise
            finally:
                self._executor = None

        files = self.render(tables, extra)
        paths = self._write(Path(out_dir), files)
        self.stats['elapsed_ms'] = get_current_time() - start
        logger.info(f"✓ {self.experiment} finished: {len(paths)} files in {self.stats['elapsed_ms']} ms")
        return paths

    def render(self, tables: List[Table], extra: Dict[str, Any]) -> Dict[str, str]:
        """File name -> text for every artifact of the run."""
        files = {}
        header = self.header_lines()
        for name, frame in tables:
            files[f"{name}.csv"] = render_table(frame, header)
        meta = {
            'tool': 'isolab',
            'version': __version__,
            'experiment': self.experiment,
            'seed': self.seed,
            'config_sha256': self.digest,
            'parameters': self.parameters,
            'tables': {name: list(frame.columns) for name, frame in tables},
            'rows': {name: len(frame) for name, frame in tables},
            **extra,
        }
        files[f"{self.experiment}.meta.json"] = json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + '\n'
        return files

    def _write(self, out_dir: Path, files: Dict[str, str]) -> List[Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in files.items():
            path = out_dir / name
            path.write_text(text, encoding='utf-8')
            paths.append(path)
        self.stats['files_written'] += len(paths)
        return paths

    # ========== executor plumbing ==========

    async def _call(self, fn: Callable, *args, **kwargs):
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self._executor, partial(fn, *args, **kwargs))

    async def _map_rows(self, fn: Callable, items: Sequence) -> List[Any]:
        """fn over items on the pool; results keep the order of items."""
        loop = asyncio.get_running_loop()
        futures = [loop.run_in_executor(self._executor, fn, item) for item in items]
        results = await asyncio.gather(*futures)
        self.stats['rows_computed'] += len(results)
        return list(results)

    def _table(self, name: str, frame: pd.DataFrame) -> Table:
        columns = TABLES[self.experiment][name]
        return name, frame.reindex(columns=columns)

    # ========== experiments ==========

    async def _fk_table(self):
        p = self.parameters
        thetas = np.linspace(0.0, math.pi, p['theta_steps'])
        frames = await self._map_rows(lambda K: fk_rows(K, thetas, p['radii']), p['curvatures'])
        return [self._table('fk_table', pd.concat(frames, ignore_index=True))], {}

    async def _isotropy(self):
        mode = self.parameters['mode']
        if mode == 'convergence':
            return await self._isotropy_convergence()
        if mode == 'unseen':
            return await self._isotropy_unseen()
        return await self._isotropy_estimate()

    def _isotropy_space(self):
        """(space, base points, bad region, description) for estimate mode."""
        p = self.parameters
        kind = p['space']
        if kind == 'spaceform':
            params = SpaceFormParams(p['K'], 2)
            rng = np.random.default_rng(self.seed)
            bases = [origin(params).coords] + [random_point(params, rng).coords for _ in range(p['n_bases'] - 1)]
            return SpaceFormSpace(params), bases, [], {'space': 'spaceform', 'K': p['K']}
        if kind == 'warped':
            if p['n_bases'] > 1:
                logger.warning('⚠ warped estimates are based at the pole only; n_bases ignored')
            profile = build_ballchange(p['s']) if p['profile'] == 'ballchange' else space_form_profile(p['K'])
            return WarpedSpace(profile), [WarpedPoint(0.0, 0.0)], [], \
                {'space': 'warped', 'profile': profile.kind.value, 'profile_params': profile.params}
        g = build_glued(p['K1'], p['K2'], p['r'])
        if not p['d'] > p['r']:
            raise DomainError('base point must sit outside the excised ball', bound='d > r')
        bases = [np.array([1.0, p['d'], 2.0 * math.pi * k / p['n_bases']]) for k in range(p['n_bases'])]
        return GluedSpace(g), bases, [Ball(None, g.r)], {'space': 'glued', 'glued': g.describe()}

    async def _isotropy_estimate(self):
        p = self.parameters
        space, bases, W, description = self._isotropy_space()
        R = p['R']
        radii = np.linspace(R / p['radii_steps'], R, p['radii_steps'])

        def one(base):
            kwargs = {}
            if W:
                reach = min(2.0 * p['d'], space.max_length)
                kwargs = {'bad': bad_directions(space, base, W, reach), 'W': W, 'pair_filter': True}
            est = estimate_F(space, base, R, p['n_dirs'], radii_grid=radii, seed=self.seed, **kwargs)
            return est, verify_axioms(est, R)

        results = await self._map_rows(one, bases)
        estimates = [est for est, _ in results]
        frames, checks = [], []
        for k, (est, report) in enumerate(results):
            frames.append(est.to_frame().assign(base=k))
            checks.append(report.to_frame().assign(base=k))
            if not report.passed:
                logger.warning(f"⚠ base {k}: axiom violations {[v[0] for v in report.violations[:5]]}")
        extra = {
            **description,
            'defect': max(est.defect for est in estimates),
            'radial_error': max(est.radial_error for est in estimates),
            'cross_point_spread': cross_point_spread(estimates),
            'axioms_passed': all(report.passed for _, report in results),
        }
        return [self._table('isotropy', pd.concat(frames, ignore_index=True)),
                self._table('isotropy_axioms', pd.concat(checks, ignore_index=True))], extra

    async def _isotropy_convergence(self):
        p = self.parameters
        frames = await self._map_rows(
            lambda r: isotropy_convergence(p['K1'], p['K2'], [r], p['d'], p['n_dirs'], self.seed),
            p['r_schedule'])
        glued = [build_glued(p['K1'], p['K2'], r).describe() for r in p['r_schedule']]
        return [self._table('isotropy_convergence', pd.concat(frames, ignore_index=True))], \
            {'m_rule': M_RULE, 'glued': glued}

    async def _isotropy_unseen(self):
        p = self.parameters
        params = SpaceFormParams(p['K'], 2)
        space = SpaceFormSpace(params)
        base = origin(params).coords
        eps = p['epsilon']
        rho = p['rho_factor'] * law_of_cosines(params.K, eps, eps, eps)
        center = space.point_at(base, 0.0, p['w_distance'])
        reach = min(2.0 * p['w_distance'], space.max_length)
        bad = await self._call(bad_directions, space, base, [Ball(center, rho)], reach)
        result = unseen_check(bad, eps)
        rows = [{'cap': k, 'center': cap.center, 'radius': cap.radius, 'epsilon': eps, 'passed': result.passed}
                for k, cap in enumerate(result.cover.caps)]
        self.stats['rows_computed'] += len(rows)
        if not result.passed:
            logger.warning(f"⚠ unseen check failed: {result.violation}")
        extra = {'rho': rho, 'passed': result.passed, 'violation': result.violation,
                 'bad_fraction': bad.fraction}
        return [self._table('unseen_caps', pd.DataFrame(rows))], extra

    async def _ghdist(self):
        p = self.parameters
        if p['source'] == 'matrix':
            if p['matrix_x'] is None or p['matrix_y'] is None:
                raise ConfigError("source 'matrix' needs both matrix_x and matrix_y")

            def load(path):
                try:
                    return FiniteMetricSpace.load(path)
                except OSError as e:
                    raise ConfigError(f"cannot read distance matrix {path}: {e}")

            X, Y = await self._map_rows(load, [p['matrix_x'], p['matrix_y']])
        else:
            def sample(spec):
                K, eps, prefix = spec
                params = SpaceFormParams(K, 2)
                return epsilon_net_sample(SpaceFormSpace(params), origin(params).coords, p['radius'], eps,
                                          seed=self.seed, prefix=prefix)

            X, Y = await self._map_rows(sample, [(p['K_x'], p['eps_x'], 'x'), (p['K_y'], p['eps_y'], 'y')])
        lower = await self._call(gh_lower, X, Y)
        upper = await self._call(gh_upper, X, Y, effort=p['effort'], seed=self.seed, threads=self.threads)
        row = {'n_X': X.n, 'n_Y': Y.n, 'diam_X': X.diameter, 'diam_Y': Y.diameter,
               'gh_lower': lower, 'gh_upper': upper}
        logger.info(f"✓ GH distance in [{lower:.6g}, {upper:.6g}]")
        return [self._table('ghdist', pd.DataFrame([row]))], {}

    async def _converge(self):
        p = self.parameters
        frame = await self._call(convergence_experiment, p['K1'], p['K2'], p['r_schedule'], p['D'], p['eps_net'],
                                 effort=p['effort'], seed=self.seed, threads=self.threads)
        self.stats['rows_computed'] += len(frame)
        failed = int(frame['gh_upper'].isna().sum())
        self.stats['rows_failed'] += failed
        glued = [build_glued(p['K1'], p['K2'], r).describe() for r in p['r_schedule']]
        return [self._table('converge', frame)], {'m_rule': M_RULE, 'glued': glued, 'rows_failed': failed}

    async def _ricci_check(self):
        p = self.parameters
        frame = await self._call(ricci_violation, p['n'], p['K1'], p['K2'], p['H'], p['r_schedule'])
        self.stats['rows_computed'] += len(frame)
        return [self._table('ricci_check', frame)], {}

    async def _packing(self):
        p = self.parameters
        params = SpaceFormParams(p['K'], 2)
        H = p['K'] if p['H'] is None else p['H']
        if H > params.K:
            raise DomainError('the comparison curvature must not exceed the sampled curvature',
                              bound=f"H <= K = {params.K!r}")
        pairs = [(s, t) for s in sorted(p['s_values']) for t in sorted(p['t_values']) if s < t]
        if not pairs:
            raise PreconditionError('no (s, t) pair with s < t', bound='min(s_values) < max(t_values)')

        X = await self._call(epsilon_net_sample, SpaceFormSpace(params), origin(params).coords,
                             p['radius'], p['epsilon'], seed=self.seed)
        rng = np.random.default_rng(self.seed)
        centers = sorted(rng.choice(X.n, size=min(p['n_centers'], X.n), replace=False).tolist())

        def one(pair):
            s, t = pair
            table = packing_table(X, [s], [t], centers=centers)
            count = int(table.counts[0, 0])
            ceiling = bishop_gromov_ceiling(2, H, s, t)
            return {'s': s, 't': t, 'packing': count, 'packing_upper': int(table.upper[0, 0]),
                    'ceiling': ceiling, 'exceeds': count > ceiling}

        rows = await self._map_rows(one, pairs)
        exceeded = [(r['s'], r['t']) for r in rows if r['exceeds']]
        if exceeded:
            logger.warning(f"⚠ packing above the volume ceiling at {exceeded}")
        return [self._table('packing', pd.DataFrame(rows))], {'n_points': X.n, 'H': H, 'centers': centers}

    def get_stats(self) -> Dict[str, Any]:
        """Engine statistics"""
        return {
            **self.stats,
            'experiment': self.experiment,
            'threads': self.threads,
            'failure_rate': self.stats['rows_failed'] / max(1, self.stats['rows_computed']),
        }
