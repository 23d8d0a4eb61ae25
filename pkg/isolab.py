"""Command-line runner for the isolab experiments.

    python isolab.py converge --config config/converge.json --out out --threads 4

Exit codes: 0 success, 1 configuration error, 2 precondition violation,
3 numeric non-convergence.
"""
import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from engine.errors import ConfigError, IsolabError
from engine.experiment_engine import (
    RULES_PATH,
    TABLES,
    ExperimentEngine,
    column_help,
    default_config_path,
    load_config,
)
from engine.parameter_rules import ParameterRules

logger = logging.getLogger('isolab')


class IsolabParser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser(rules: ParameterRules) -> argparse.ArgumentParser:
    parser = IsolabParser(prog='isolab', description='Numerical metric-geometry experiments.')
    sub = parser.add_subparsers(dest='experiment', metavar='EXPERIMENT', required=True)
    for name in TABLES:
        p = sub.add_parser(name, help=rules.describe(name), description=rules.describe(name),
                           epilog='output columns:\n' + column_help(name),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument('--config', type=Path, default=None,
                       help='experiment config (default: config/<experiment>.json)')
        p.add_argument('--seed', type=int, default=None, help='override the config seed')
        p.add_argument('--out', type=Path, default=Path('out'), help='output directory (default: out)')
        p.add_argument('--threads', type=int, default=None,
                       help='worker threads (default: $ISOLAB_THREADS, else 1)')
    return parser


def resolve_threads(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get('ISOLAB_THREADS', '').strip()
    if not env:
        return 1
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"ISOLAB_THREADS must be an integer, got {env!r}")


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format='%(message)s')
    try:
        rules = ParameterRules.from_file(RULES_PATH)
        args = build_parser(rules).parse_args(argv)
        config = load_config(args.config or default_config_path(args.experiment))
        if config.get('experiment') != args.experiment:
            raise ConfigError(f"config describes {config.get('experiment')!r}, not {args.experiment!r}")
        if args.seed is not None:
            config = {**config, 'seed': args.seed}
        engine = ExperimentEngine(config, rules, threads=resolve_threads(args.threads))
        paths = asyncio.run(engine.run(args.out))
    except IsolabError as e:
        logger.error(f"✗ {e}")
        return e.exit_code

    for path in paths:
        logger.info(f"  - wrote {path}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
