import json

import pytest

from src.model.errors import ConfigError
from src.utils.config import Config, get_config
from tests.conftest import scenario_dict


def _error_path(data):
    with pytest.raises(ConfigError) as caught:
        Config.from_dict(data)
    return caught.value.field_path


def test_defaults():
    config = Config.from_dict({})
    assert config.CHAIN.N_PARTICLES == 64
    assert config.STATE.TYPE == "product"
    assert config.ANALYSIS.TASKS == ("modes",)
    assert config.HYDRO.BOUNDARY == "closed"


def test_round_trip_through_json():
    data = scenario_dict(
        CHAIN={"N_PARTICLES": 4, "K": 1, "ZERO_MODE": "drop"},
        STATE={"TYPE": "coherent", "MODE_AMPLITUDES": [0, [0.5, 0.1], 0.2, 0]},
        GRIDS={"K_VALUES": [0.1, 0.5, 2.0]},
        ANALYSIS={"TASKS": ["modes", "evolve", "densities"]},
    )
    config = Config.from_dict(data)
    assert config.STATE.MODE_AMPLITUDES == (0.0, (0.5, 0.1), 0.2, 0.0)
    assert config.CHAIN.K == 1.0 and isinstance(config.CHAIN.K, float)
    again = Config.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config
    assert again.config_hash() == config.config_hash()


def test_hash_tracks_content():
    base = Config.from_dict(scenario_dict())
    same = Config.from_dict(scenario_dict())
    other = Config.from_dict(scenario_dict(CHAIN={"MASS": 2.0}))
    assert base.config_hash() == same.config_hash()
    assert base.config_hash() != other.config_hash()
    assert len(base.config_hash()) == 64


def test_with_tasks():
    config = Config.from_dict(scenario_dict())
    replaced = config.with_tasks(("evolve",))
    assert replaced.ANALYSIS.TASKS == ("evolve",)
    assert replaced.CHAIN == config.CHAIN


@pytest.mark.parametrize("sections,path", [
    ({"CHAIN": {"MASS": -1.0}}, "CHAIN.MASS"),
    ({"CHAIN": {"MASS": True}}, "CHAIN.MASS"),
    ({"CHAIN": {"MAS": 1.0}}, "CHAIN.MAS"),
    ({"CHAIN": {"NU2": 0.0, "K": 0.0}}, "CHAIN.NU2"),
    ({"CHAIN": {"N_PARTICLES": None, "K": 1.0}}, "CHAIN.K"),
    ({"CHAIN": {"KIND": "infinite-bound"}}, "CHAIN.KIND"),
    ({"STATE": {"DQ2": 0.1, "DP2": 0.1}}, "STATE.DQ2"),
    ({"STATE": {"TYPE": "squeezed"}}, "STATE.TYPE"),
    ({"STATE": {"TYPE": "coherent", "MODE_AMPLITUDES": [1.0, 2.0]}}, "STATE.MODE_AMPLITUDES"),
    ({"STATE": {"MODE_AMPLITUDES": [1.0, [1.0, 2.0, 3.0]]}}, "STATE.MODE_AMPLITUDES[1]"),
    ({"GRIDS": {"T_START": 3.0, "T_STOP": 1.0}}, "GRIDS.T_STOP"),
    ({"GRIDS": {"T_SPACING": "log", "T_START": 0.0}}, "GRIDS.T_START"),
    ({"GRIDS": {"K_VALUES": [1.0, 0.5]}}, "GRIDS.K_VALUES"),
    ({"GRIDS": {"K_VALUES": [1.0, "x"]}}, "GRIDS.K_VALUES[1]"),
    ({"ANALYSIS": {"TASKS": ["modes", "plot"]}}, "ANALYSIS.TASKS[1]"),
    ({"ANALYSIS": {"TASKS": ["subsection"]}, "SUBSECTION": {"M": 9}}, "SUBSECTION.M"),
    ({"ANALYSIS": {"TASKS": ["subsection"]}, "SUBSECTION": {"ENERGY": True}}, "SUBSECTION.ENERGY"),
    ({"HYDRO": {"COURANT": 1.5}}, "HYDRO.COURANT"),
    ({"SETTINGS": {"THREADS": 0}}, "SETTINGS.THREADS"),
])
def test_error_paths(sections, path):
    assert _error_path(scenario_dict(**sections)) == path


def test_modes_need_a_finite_chain():
    data = scenario_dict(CHAIN={"N_PARTICLES": None})
    assert _error_path(data) == "ANALYSIS.TASKS"


def test_compare_needs_a_linear_grid_from_zero():
    data = scenario_dict(ANALYSIS={"TASKS": ["compare"]}, GRIDS={"T_START": 1.0, "T_STOP": 5.0})
    assert _error_path(data) == "GRIDS.T_SPACING"


def test_unknown_section():
    assert _error_path({"PLOTTING": {}}) == "PLOTTING"


def test_load_yaml_and_json(tmp_path):
    yaml_path = tmp_path / "scenario.yaml"
    yaml_path.write_text("CHAIN:\n  N_PARTICLES: 8\n  K: 0.5  # binding\nANALYSIS:\n  TASKS: [modes, evolve]\n",
                         encoding="utf-8")
    json_path = tmp_path / "scenario.json"
    json_path.write_text(json.dumps({"CHAIN": {"N_PARTICLES": 8, "K": 0.5}, "ANALYSIS": {"TASKS": ["modes", "evolve"]}}),
                         encoding="utf-8")
    assert Config.load(str(yaml_path)) == Config.load(str(json_path))


def test_load_failures(tmp_path):
    with pytest.raises(FileNotFoundError):
        Config.load(str(tmp_path / "missing.yaml"))
    broken = tmp_path / "broken.yaml"
    broken.write_text("CHAIN: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError) as caught:
        Config.load(str(broken))
    assert caught.value.field_path == "<document>"


def test_get_config_caches_per_path(tmp_path):
    path = tmp_path / "cached.json"
    path.write_text(json.dumps(scenario_dict()), encoding="utf-8")
    first = get_config(str(path))
    assert get_config(str(path)) is first
