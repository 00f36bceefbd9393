import json
from pathlib import Path

import pytest

from plumeseek.config import ConfigError, SearchConfig, load_config, save_config
from plumeseek.lattice import build_complete_grid
from plumeseek.sensing import DetectionMatrix

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_match_reference_scenario():
    cfg = SearchConfig()
    assert (cfg.R0, cfg.p, cfg.start, cfg.source, cfg.A0) == (9, 0.35, (9, -4), (0, 7), 12.0)
    assert (cfg.N, cfg.M, cfg.p_e, cfg.max_steps) == (4000, 400, 0.04, 100)
    assert cfg.primary == DetectionMatrix(1.0, 0.0)
    assert cfg.secondary == DetectionMatrix(0.8, 0.1)


def test_round_trip_through_dict():
    cfg = SearchConfig(source=(2, -5), A0=8.0, secondary=DetectionMatrix(0.7, 0.2))
    again = SearchConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_replace_ignores_none():
    cfg = SearchConfig().replace(run_seed=7, N=None)
    assert cfg.run_seed == 7 and cfg.N == 4000


@pytest.mark.parametrize(
    "overrides",
    [
        {"max_steps": 0},
        {"p": 0.5},
        {"A0": 0},
        {"bhatt_method": "simpson"},
        {"source": "0,7"},
        {"source": (0.5, 7)},
        {"primary": {"p_d": 0.1, "p_fa": 0.2}},
        {"ess_threshold": 1.5},
    ],
)
def test_invalid_values_are_config_errors(overrides):
    with pytest.raises(ConfigError):
        SearchConfig.from_dict(overrides)


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="radius"):
        SearchConfig.from_dict({"radius": 9})


def test_validate_geometry():
    grid = build_complete_grid(9)
    SearchConfig().validate_geometry(grid)
    with pytest.raises(ConfigError, match="rim"):
        SearchConfig(source=(9, -4)).validate_geometry(grid)
    with pytest.raises(ConfigError, match="not a node"):
        SearchConfig(start=(12, 0)).validate_geometry(grid)


def test_load_and_save(tmp_path: Path):
    path = save_config(SearchConfig(N=10, M=5), tmp_path / "cfg.json")
    assert load_config(path).N == 10

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


@pytest.mark.parametrize("name", ["reference.json", "reference_low_rate.json", "desk_scale.json"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    cfg.validate_geometry(build_complete_grid(cfg.R0, closed_disk=cfg.closed_disk))


def test_desk_scale_config():
    cfg = load_config(CONFIGS / "desk_scale.json")
    assert (cfg.N, cfg.M, cfg.source) == (2000, 200, (2, -5))
