import json

import pytest

from engine.errors import ConfigError, NonConvergenceError, PreconditionError
from engine.experiment_engine import RULES_PATH
from engine.parameter_rules import ParameterRules


@pytest.fixture(scope="module")
def rules():
    return ParameterRules.from_file(RULES_PATH)


def inline(**parameters):
    return ParameterRules({"experiments": {"demo": {"parameters": parameters}}})


# ========== defaults ==========

def test_defaults_are_filled_in_rule_order(rules):
    params = rules.evaluate("fk-table", {})
    assert list(params) == ["curvatures", "theta_steps", "radii"]
    assert params["theta_steps"] == 9
    assert params["radii"] == [0.25, 0.5, 1.0, 2.0]


def test_null_defaults_are_kept(rules):
    params = rules.evaluate("packing", {})
    assert params["H"] is None
    assert rules.evaluate("ghdist", {})["matrix_x"] is None


def test_every_experiment_resolves_its_defaults(rules):
    for name in rules.names():
        assert isinstance(rules.evaluate(name, {}), dict)
        assert rules.describe(name)
    assert rules.describe("nope") == ""


# ========== types ==========

def test_integers(rules):
    assert rules.evaluate("fk-table", {"theta_steps": 3.0})["theta_steps"] == 3
    for bad in (2.5, True, "abc", "0.5"):
        with pytest.raises(ConfigError):
            rules.evaluate("fk-table", {"theta_steps": bad})


def test_numbers(rules):
    assert rules.evaluate("packing", {"K": "0.5"})["K"] == pytest.approx(0.5)
    for bad in ("nan", "inf", [1.0], False):
        with pytest.raises(ConfigError):
            rules.evaluate("packing", {"K": bad})


def test_lists_and_strings(rules):
    with pytest.raises(ConfigError):
        rules.evaluate("fk-table", {"radii": 0.5})
    with pytest.raises(ConfigError):
        rules.evaluate("fk-table", {"radii": [0.5, "x"]})
    with pytest.raises(ConfigError):
        rules.evaluate("isotropy", {"mode": 3})
    rules_ = inline(extra={"type": "object", "default": {}})
    assert rules_.evaluate("demo", {"extra": {"a": 1}}) == {"extra": {"a": 1}}
    with pytest.raises(ConfigError):
        rules_.evaluate("demo", {"extra": [1]})


def test_nullable(rules):
    assert rules.evaluate("packing", {"H": None})["H"] is None
    with pytest.raises(ConfigError):
        rules.evaluate("packing", {"K": None})


# ========== constraints ==========

def test_choices(rules):
    with pytest.raises(PreconditionError) as err:
        rules.evaluate("isotropy", {"mode": "sideways"})
    assert err.value.bound == "mode in ['estimate', 'convergence', 'unseen']"
    assert "violated bound" in str(err.value)


def test_decreasing_schedules(rules):
    assert rules.evaluate("converge", {"r_schedule": [0.3, 0.1]})["r_schedule"] == [0.3, 0.1]
    for schedule in ([0.1, 0.2], [0.1, 0.1]):
        with pytest.raises(PreconditionError) as err:
            rules.evaluate("converge", {"r_schedule": schedule})
        assert err.value.bound == "r_schedule strictly decreasing"


def test_empty_lists(rules):
    with pytest.raises(PreconditionError) as err:
        rules.evaluate("ricci-check", {"r_schedule": []})
    assert err.value.bound == "len(r_schedule) >= 1"


def test_ranges(rules):
    with pytest.raises(PreconditionError) as err:
        rules.evaluate("fk-table", {"radii": [0.5, 0.0]})
    assert err.value.bound == "radii > 0"
    with pytest.raises(PreconditionError) as err:
        rules.evaluate("fk-table", {"theta_steps": 1})
    assert err.value.bound == "theta_steps >= 2"
    with pytest.raises(PreconditionError) as err:
        rules.evaluate("isotropy", {"n_dirs": 2000})
    assert err.value.bound == "n_dirs <= 1440"


# ========== structure ==========

def test_unknown_names(rules):
    with pytest.raises(ConfigError):
        rules.evaluate("fk-table", {"theta": 3})
    with pytest.raises(ConfigError):
        rules.evaluate("teleport", {})
    with pytest.raises(ConfigError):
        rules.evaluate("fk-table", [1, 2])


def test_required_parameters():
    rules_ = inline(a={"type": "number", "required": True})
    with pytest.raises(ConfigError):
        rules_.evaluate("demo", {})
    assert rules_.evaluate("demo", {"a": 2}) == {"a": 2.0}


def test_malformed_rules(tmp_path):
    with pytest.raises(ConfigError):
        ParameterRules({})
    with pytest.raises(ConfigError):
        inline(a={"type": "matrix"})
    with pytest.raises(ConfigError):
        ParameterRules.from_file(tmp_path / "missing.json")
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ParameterRules.from_file(path)
    path.write_text(json.dumps({"experiments": {}}))
    assert ParameterRules.from_file(path).names() == []


def test_exit_codes():
    assert ConfigError("x").exit_code == 1
    assert PreconditionError("x").exit_code == 2
    assert NonConvergenceError("x", bracket=(0, 1)).exit_code == 3
    assert isinstance(PreconditionError("x"), ValueError)
    assert PreconditionError("x", bound="a > 0").bound == "a > 0"
