import math

import pytest

from safenav.config import ConfigError, bundled_config, load_scenario, parse_scenario

BUNDLED = ["desk_train", "static_target", "dynamic_target", "train_full"]


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load(name):
    sc = load_scenario(bundled_config(name))
    assert sc.world.width > 0
    assert sc.source.endswith(f"{name}.toml")


def test_static_target_values():
    sc = load_scenario(bundled_config("static_target"))
    assert (sc.world.width, sc.world.height) == (100.0, 100.0)
    assert (sc.world.n_static, sc.world.n_dynamic) == (40, 10)
    assert sc.world.dtheta_max == pytest.approx(math.pi / 6)
    assert sc.world.layout == "corridor"
    assert sc.filter["k_cbf"] == 1.0


def test_dynamic_target_moves():
    sc = load_scenario(bundled_config("dynamic_target"))
    assert sc.world.target_mode == "moving" and sc.world.target_speed > 0


def test_defaults_when_sections_missing():
    sc = parse_scenario({})
    assert sc.world.width == 1000.0 and sc.td3.batch_size == 256 and sc.filter == {}


@pytest.mark.parametrize("data", [
    {"world": {"widht": 10}},
    {"rewards": {"k_X": 1}},
    {"td3": {"lr": 1e-3}},
    {"filter": {"k_clf": 1.0, "gain": 2}},
    {"physics": {}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigError):
        parse_scenario(data)


@pytest.mark.parametrize("data", [
    {"world": {"width": -1.0}},
    {"world": {"dtheta_max": "pi/"}},
    {"rewards": {"k_T": 0.0}},
    {"td3": {"gamma": 1.5}},
])
def test_invalid_values_rejected(data):
    with pytest.raises(ConfigError):
        parse_scenario(data)


def test_pi_expressions():
    sc = parse_scenario({"world": {"dtheta_max": "pi/4"}})
    assert sc.world.dtheta_max == pytest.approx(math.pi / 4)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[world\nwidth = 3")
    with pytest.raises(ConfigError):
        load_scenario(bad)
    with pytest.raises(ConfigError):
        bundled_config("nope")


def test_round_trip_file(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text('[world]\nwidth = 50.0\nheight = 40.0\n[td3]\nhidden = [4, 4]\n[filter]\nmargin = 0.2\n')
    sc = load_scenario(f)
    assert sc.world.height == 40.0 and sc.td3.hidden == (4, 4) and sc.filter == {"margin": 0.2}
