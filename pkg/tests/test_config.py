import math

import pytest

from qdcavity.config import PRESETS, config_hash, load_config, load_text, parse_config
from qdcavity.errors import ConfigError
from qdcavity.units import detuning_from_nm, ghz_to_rad_ps, q_to_rad_ps, uev_to_rad_ps

BASE = """
params:
  g: 25 GHz
  kappa: 1e4 Q
  gamma: 1 GHz
  gamma_d: 0.1 g
  delta: -1.2 nm
"""


def test_units_resolved():
    c = parse_config(BASE)
    p = c.params
    assert p.g == pytest.approx(ghz_to_rad_ps(25))
    assert p.kappa == pytest.approx(q_to_rad_ps(1e4))
    assert p.gamma == pytest.approx(ghz_to_rad_ps(1))
    assert p.gamma_d == pytest.approx(0.1 * p.g)
    assert p.delta == pytest.approx(detuning_from_nm(-1.2))


@pytest.mark.parametrize(
    "text,value",
    [
        ("0.2 rad/ps", 0.2),
        ("200 rad/ns", 0.2),
        ("100 ueV", uev_to_rad_ps(100)),
        ("0.1 meV", uev_to_rad_ps(100)),
        ("25000 MHz", ghz_to_rad_ps(25)),
    ],
)
def test_rate_units(text, value):
    c = parse_config(f"params: {{g: {text}, kappa: 0.2 rad/ps, gamma: 0.01 rad/ps}}")
    assert c.params.g == pytest.approx(value)


@pytest.mark.parametrize(
    "text,field",
    [
        ("params: {kappa: 1e4 Q, gamma: 1 GHz}", "params.g"),
        ("params: {g: 25, kappa: 1e4 Q, gamma: 1 GHz}", "params.g"),
        ("params: {g: 25 furlongs, kappa: 1e4 Q, gamma: 1 GHz}", "params.g"),
        ("params: {g: 25 GHz, kappa: -1e4 Q, gamma: 1 GHz}", "params.kappa"),
        ("params: {g: 25 GHz, kappa: 1e4 Q, gamma: 1 GHz, colour: red}", "params.colour"),
        (BASE + "bogus: 1\n", "bogus"),
        (BASE + "p_dark: 1.5\n", "p_dark"),
        (BASE + "time: {stop: 10 ps, step: 1 kg}\n", "time.step"),
    ],
)
def test_schema_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == field


def test_empty_and_malformed_yaml():
    with pytest.raises(ConfigError):
        parse_config("")
    with pytest.raises(ConfigError):
        parse_config("params: [unclosed")


def test_hash_ignores_key_order_and_whitespace():
    reordered = """
params:
    delta:   -1.2 nm
    gamma_d: 0.1 g
    g:       25 GHz
    gamma: 1 GHz
    kappa:  1e4 Q
"""
    assert config_hash(parse_config(BASE)) == config_hash(parse_config(reordered))
    changed = BASE.replace("25 GHz", "26 GHz")
    assert config_hash(parse_config(BASE)) != config_hash(parse_config(changed))


def test_equivalent_units_share_a_hash():
    a = parse_config("params: {g: 0.2 rad/ps, kappa: 0.2 rad/ps, gamma: 0.01 rad/ps}")
    b = parse_config("params: {g: 200 rad/ns, kappa: 0.2 rad/ps, gamma: 0.01 rad/ps}")
    assert config_hash(a) == config_hash(b)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    c = load_config(name)
    assert c.params.g == pytest.approx(2 * math.pi * 0.025)
    assert c.seed == 0
    assert c.name == name
    assert "\u2014" not in load_text(name)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_config("no_such_preset")


def test_load_from_path(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(BASE, encoding="utf-8")
    assert load_config(str(path)) == parse_config(BASE)
