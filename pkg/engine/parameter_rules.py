"""
ParameterRules - checks experiment parameters against declarative rules

Usage:
    from engine.parameter_rules import ParameterRules
    rules = ParameterRules.from_file('config/parameter_rules.json')
    params = rules.evaluate('converge', config['parameters'])
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Union

from engine.errors import ConfigError, PreconditionError
from engine.geom_util import cast_to_num

TYPES = ('number', 'integer', 'number_list', 'string', 'object')


class ParameterRules:
    def __init__(self, rules: Dict[str, Any]):
        if not rules or 'experiments' not in rules:
            raise ConfigError("Invalid parameter rules: missing 'experiments' key")
        self.experiments = rules['experiments']
        for experiment, spec in self.experiments.items():
            for name, rule in spec.get('parameters', {}).items():
                if rule.get('type') not in TYPES:
                    raise ConfigError(f"rule {experiment}.{name} has unknown type {rule.get('type')!r}")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'ParameterRules':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return cls(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read parameter rules {path}: {e}")

    def names(self) -> List[str]:
        return list(self.experiments)

    def describe(self, experiment: str) -> str:
        return self.experiments.get(experiment, {}).get('description', '')

    def evaluate(self, experiment: str, parameters: Dict[str, Any]) -> Dict[str, Any]:
        """
        Resolve defaults and check every parameter

        Args:
            experiment: experiment name
            parameters: the config's parameter block

        Returns:
            parameters with defaults filled in, in rule order
        """
        if experiment not in self.experiments:
            raise ConfigError(f"unknown experiment {experiment!r}; expected one of {', '.join(self.names())}")
        if not isinstance(parameters, dict):
            raise ConfigError("'parameters' must be an object")
        rules = self.experiments[experiment].get('parameters', {})

        unknown = sorted(set(parameters) - set(rules))
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {experiment}: {', '.join(unknown)}")

        resolved = {}
        for name, rule in rules.items():
            if name in parameters:
                value = self._check_type(name, parameters[name], rule)
            elif rule.get('required', False):
                raise ConfigError(f"missing required parameter {name!r} for {experiment}")
            else:
                value = rule.get('default')
                if value is None:
                    resolved[name] = None
                    continue
            self._check_constraints(name, value, rule)
            resolved[name] = value
        return resolved

    # type / shape problems are configuration errors

    def _check_type(self, name: str, value: Any, rule: Dict) -> Any:
        kind = rule['type']
        if value is None:
            if rule.get('nullable', False):
                return None
            raise ConfigError(f"parameter {name!r} must not be null")

        if kind == 'number':
            return self._number(name, value)

        if kind == 'integer':
            number = self._number(name, value)
            if not float(number).is_integer():
                raise ConfigError(f"parameter {name!r} must be an integer, got {value!r}")
            return int(number)

        if kind == 'number_list':
            if not isinstance(value, list):
                raise ConfigError(f"parameter {name!r} must be a list of numbers")
            return [self._number(name, v) for v in value]

        if kind == 'string':
            if not isinstance(value, str):
                raise ConfigError(f"parameter {name!r} must be a string")
            return value

        if not isinstance(value, dict):
            raise ConfigError(f"parameter {name!r} must be an object")
        return value

    def _number(self, name: str, value: Any) -> float:
        if isinstance(value, bool):
            raise ConfigError(f"parameter {name!r} must be numeric, got {value!r}")
        number = cast_to_num(value)
        if not isinstance(number, (int, float)) or not math.isfinite(number):
            raise ConfigError(f"parameter {name!r} must be a finite number, got {value!r}")
        return number

    # value problems are precondition violations

    def _check_constraints(self, name: str, value: Any, rule: Dict) -> None:
        if value is None:
            return
        if 'choices' in rule and value not in rule['choices']:
            raise PreconditionError(f"parameter {name!r} is {value!r}",
                                    bound=f"{name} in {rule['choices']}")

        values = value if isinstance(value, list) else [value]
        if rule['type'] == 'number_list':
            if len(values) < rule.get('min_length', 1):
                raise PreconditionError(f"parameter {name!r} has {len(values)} entries",
                                        bound=f"len({name}) >= {rule.get('min_length', 1)}")
            if rule.get('order') == 'decreasing' and any(b >= a for a, b in zip(values, values[1:])):
                raise PreconditionError(f"parameter {name!r} is not strictly decreasing",
                                        bound=f"{name} strictly decreasing")
        if rule['type'] in ('number', 'integer', 'number_list'):
            for v in values:
                self._check_range_constraint(name, v, rule)

    def _check_range_constraint(self, name: str, value: float, rule: Dict) -> None:
        """Range constraint {min: 0, max: 1}; greater_than is strict"""
        if 'min' in rule and value < rule['min']:
            raise PreconditionError(f"parameter {name!r} = {value!r} is too small", bound=f"{name} >= {rule['min']}")

        if 'greater_than' in rule and not value > rule['greater_than']:
            raise PreconditionError(f"parameter {name!r} = {value!r} is too small",
                                    bound=f"{name} > {rule['greater_than']}")

        if 'max' in rule and value > rule['max']:
            raise PreconditionError(f"parameter {name!r} = {value!r} is too large", bound=f"{name} <= {rule['max']}")
