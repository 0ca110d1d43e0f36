import copy

import pytest
import yaml

from map_vio.config_reader import (
    ConfigReader,
    canonical_config,
    load_experiment_config,
)
from map_vio.definitions import DEFAULT_CONFIG
from map_vio.exceptions import ConfigValidationError


def test_defaults_are_valid():
    """Loading without a file gives the canonical defaults."""
    cfg = load_experiment_config()
    assert cfg == canonical_config({})
    assert cfg["Filter"]["InitMode"] == "ground-truth"
    assert cfg["Scenario"]["SceneSeed"] == 0


def test_round_trip_is_canonical(short_overrides, tmp_path):
    """Writing a canonical configuration and reading it back changes nothing."""
    cfg = canonical_config(short_overrides)
    path = tmp_path / "round_trip.yaml"
    ConfigReader().write_config(cfg, path)
    assert load_experiment_config(path) == cfg


def test_write_keeps_backup(tmp_path):
    """Overwriting a configuration keeps the previous file as a backup."""
    path = tmp_path / "exp.yaml"
    reader = ConfigReader()
    reader.write_config({"General": {"Seeds": [1]}}, path)
    reader.write_config({"General": {"Seeds": [2]}}, path)
    backup = yaml.safe_load((tmp_path / "exp.yaml.backup").read_text())
    assert backup["General"]["Seeds"] == [1]


def test_integers_become_floats():
    """Integer values of float settings are normalized."""
    cfg = canonical_config({"Scenario": {"Duration": 5}})
    assert isinstance(cfg["Scenario"]["Duration"], float)


def test_overrides_apply_over_file(tmp_path):
    """Dotted overrides replace file values."""
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({"Filter": {"MaxClones": 7}}))
    cfg = load_experiment_config(path, {"Filter.MaxClones": 4, "Camera.PixelNoise": 0.5})
    assert cfg["Filter"]["MaxClones"] == 4
    assert cfg["Camera"]["PixelNoise"] == 0.5


@pytest.mark.parametrize(
    "partial",
    [
        {"Nonsense": {}},
        {"Filter": {"Unknown": 1}},
        {"Filter": {"MaxClones": "many"}},
        {"Filter": {"MaxClones": 1}},
        {"Filter": {"InitMode": "psychic"}},
        {"Filter": {"CalibActive": True}},
        {"Filter": {"Chi2Confidence": 1.0}},
        {"Camera": {"PixelNoise": 0.0}},
        {"Scenario": {"SceneSeed": -1}},
        {"Scenario": {"ImuRate": 5.0}},
        {"PriorMap": {"RenderRate": 60.0}},
        {"PriorMap": {"Grid": [20, 20]}},
        {"InitModel": {"MetricA": [0.6, 0.6, 0.6]}},
        {"General": {"Seeds": []}},
    ],
)
def test_invalid_values_rejected(partial):
    """Unknown keys, wrong types and out-of-range values are refused."""
    with pytest.raises(ConfigValidationError):
        canonical_config(partial)


def test_bad_override_key_rejected():
    """Overrides must name a section and a key."""
    with pytest.raises(ConfigValidationError):
        load_experiment_config(overrides={"MaxClones": 3})


def test_unsupported_extension_rejected(tmp_path):
    """Only YAML files are read."""
    path = tmp_path / "exp.json"
    path.write_text("{}")
    with pytest.raises(ConfigValidationError):
        load_experiment_config(path)


def test_non_mapping_file_rejected(tmp_path):
    """A YAML list is not a configuration."""
    path = tmp_path / "exp.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigValidationError):
        load_experiment_config(path)


def test_defaults_not_mutated():
    """Building configurations leaves the defaults untouched."""
    before = copy.deepcopy(DEFAULT_CONFIG)
    canonical_config({"Scenario": {"ChangeRegions": []}, "Filter": {"MaxClones": 3}})
    assert DEFAULT_CONFIG == before
