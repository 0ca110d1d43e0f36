"""
Configuration Reader Module

Reads and writes the YAML files of the package: the experiment configuration
and the prior-map file.

This module provides:

- Support for YAML format including .yaml, .yml, and .conf file extensions
- Backup functionality for safe configuration updates
- Dot notation overrides of nested configuration values
- Experiment configuration defaults, validation and canonical form
"""

import copy
import logging
import math
import shutil
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .definitions import DEFAULT_CONFIG, INIT_MODES
from .exceptions import ConfigValidationError

logger = logging.getLogger(__name__)


class ConfigReader:
    """
    Reader and writer for YAML files: experiment configurations and map files.

    Supports formats:
    - YAML (.yaml, .yml, .conf)
    """

    def __init__(self):
        self.supported_formats = [".yaml", ".yml", ".conf"]

    def _check_format(self, config_path: Path) -> None:
        file_extension = config_path.suffix.lower()
        if file_extension not in self.supported_formats:
            raise ConfigValidationError(
                f"Unsupported configuration format: {file_extension}. "
                f"Supported formats: {self.supported_formats}"
            )

    def read_config(self, config_file: Union[str, Path]) -> Dict[str, Any]:
        """
        Read configuration from a file.

        :param config_file: Path to the configuration file
        :type config_file: Union[str, Path]
        :return: Dictionary containing the configuration data
        :rtype: Dict[str, Any]
        :raises ConfigValidationError: If file cannot be read or parsed
        """
        config_path = Path(config_file)
        logger.debug(f"Reading configuration from: {config_path}")

        if not config_path.exists():
            raise ConfigValidationError(f"Configuration file not found: {config_path}")

        if not config_path.is_file():
            raise ConfigValidationError(f"Path is not a file: {config_path}")

        self._check_format(config_path)

        try:
            config_data = self._read_yaml(config_path)
            logger.debug(f"Successfully loaded configuration from {config_path}")
            return config_data

        except ConfigValidationError:
            logger.error(f"Failed to read configuration from {config_path}")
            raise

        except Exception as e:
            logger.exception(f"Unexpected error reading config: {config_path}")
            raise ConfigValidationError("Unexpected error reading config") from e

    def write_config(
        self,
        config_data: Dict[str, Any],
        config_file: Union[str, Path],
        backup: bool = True,
    ) -> None:
        """
        Write configuration to a file.

        :param config_data: Configuration data to write
        :type config_data: Dict[str, Any]
        :param config_file: Path to the configuration file
        :type config_file: Union[str, Path]
        :param bool backup: Create backup of existing file before writing
        :raises ConfigValidationError: If file cannot be written
        """
        config_path = Path(config_file)
        logger.debug(f"Writing configuration to: {config_path}")
        self._check_format(config_path)

        config_path.parent.mkdir(parents=True, exist_ok=True)

        if backup and config_path.exists():
            self._create_backup(config_path)

        self._write_yaml(config_data, config_path)
        logger.debug(f"Successfully wrote configuration to {config_path}")

    def set_config_value(
        self, config_data: Dict[str, Any], key_path: str, value: Any
    ) -> None:
        """
        Set a configuration value using dot notation.

        :param config_data: Configuration dictionary to modify
        :type config_data: Dict[str, Any]
        :param str key_path: Dot-separated key path (e.g., 'Filter.MapUpdates')
        :param value: Value to set
        :type value: Any
        """
        keys = key_path.split(".")
        current = config_data
        for key in keys[:-1]:
            current = current.setdefault(key, {})
        current[keys[-1]] = value

    def _read_yaml(self, config_path: Path) -> Dict[str, Any]:
        with open(config_path, "r", encoding="utf-8") as f:
            content = f.read()

        if not content.strip():
            logger.debug(f"YAML file {config_path} is empty")
            return {}

        try:
            data = yaml.safe_load(content)
        except yaml.YAMLError as e:
            logger.error(f"Failed to parse YAML file: {config_path}")
            raise ConfigValidationError("Failed to parse YAML file") from e

        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigValidationError("Configuration file must contain a dictionary")
        return data

    def _write_yaml(self, config_data: Dict[str, Any], config_path: Path) -> None:
        try:
            with open(config_path, "w", encoding="utf-8") as f:
                yaml.safe_dump(config_data, f, default_flow_style=False, indent=2)

        except Exception as e:
            logger.exception(f"Failed to write YAML file: {config_path}")
            raise ConfigValidationError("Failed to write YAML file") from e

    def _create_backup(self, config_path: Path) -> None:
        backup_path = config_path.with_suffix(config_path.suffix + ".backup")
        try:
            shutil.copy2(config_path, backup_path)
            logger.debug(f"Created backup: {backup_path}")

        except Exception as e:
            logger.exception("Failed to create backup")
            raise ConfigValidationError("Failed to create backup") from e


def _check_type(section: str, key: str, value: Any, default: Any) -> Any:
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigValidationError(f"{where} must be a boolean, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError(f"{where} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigValidationError(f"{where} must be finite")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigValidationError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigValidationError(f"{where} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigValidationError(f"{where} must be a list, got {value!r}")
        return copy.deepcopy(value)
    return value


def _check_vector(where: str, value: Any, length: int, integer: bool = False):
    if len(value) != length:
        raise ConfigValidationError(f"{where} must have {length} entries")
    for v in value:
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            raise ConfigValidationError(f"{where} has a non-numeric entry {v!r}")
    return [v if integer else float(v) for v in value]


def _positive(cfg: Dict[str, Any], *paths: str) -> None:
    for path in paths:
        section, key = path.split(".")
        if cfg[section][key] <= 0:
            raise ConfigValidationError(f"{path} must be > 0, got {cfg[section][key]}")


def validate_config(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """
    Check sections, keys, types and ranges of an experiment configuration.

    :param cfg: Fully populated configuration
    :type cfg: Dict[str, Any]
    :return: The configuration with numbers normalized
    :rtype: Dict[str, Any]
    :raises ConfigValidationError: On unknown keys, wrong types or bad ranges
    """
    out = {}
    for section, values in cfg.items():
        if section not in DEFAULT_CONFIG:
            raise ConfigValidationError(f"Unknown configuration section '{section}'")
        if not isinstance(values, dict):
            raise ConfigValidationError(f"Section '{section}' must be a mapping")
        out[section] = {}
        for key, value in values.items():
            if key not in DEFAULT_CONFIG[section]:
                raise ConfigValidationError(f"Unknown key '{section}.{key}'")
            out[section][key] = _check_type(
                section, key, value, DEFAULT_CONFIG[section][key]
            )

    for section, defaults in DEFAULT_CONFIG.items():
        missing = set(defaults) - set(out.get(section, {}))
        if missing:
            raise ConfigValidationError(f"Section '{section}' lacks {sorted(missing)}")

    _positive(
        out,
        "Scenario.Duration",
        "Scenario.ImuRate",
        "Scenario.Radius",
        "Camera.Rate",
        "Camera.Width",
        "Camera.Height",
        "Camera.Focal",
        "PriorMap.RenderRate",
        "PriorMap.FastThreshold",
        "PriorMap.AssociationRadius",
        "InitModel.HiddenWidth",
        "InitModel.Epochs",
        "InitModel.LearningRate",
        "InitModel.BatchSize",
        "InitModel.TrainSamples",
        "InitModel.ValidationSamples",
        "General.Workers",
    )
    if not out["General"]["Seeds"] or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in out["General"]["Seeds"]
    ):
        raise ConfigValidationError("General.Seeds must be a nonempty list of integers")

    if 1.0 / out["Scenario"]["ImuRate"] > 0.1:
        raise ConfigValidationError("Scenario.ImuRate gives IMU steps above 0.1 s")
    if out["Scenario"]["StationaryTime"] < 0 or out["Scenario"]["RampTime"] < 0:
        raise ConfigValidationError("Scenario stationary and ramp times must be >= 0")
    counts = ("TableLandmarks", "WallLandmarks", "SceneSeed")
    if min(out["Scenario"][k] for k in counts) < 0:
        raise ConfigValidationError("Landmark counts and the scene seed must be >= 0")
    for i, region in enumerate(out["Scenario"]["ChangeRegions"]):
        if not isinstance(region, dict) or set(region) != {
            "Lower",
            "Upper",
            "Displacement",
        }:
            raise ConfigValidationError(
                f"Scenario.ChangeRegions[{i}] needs Lower, Upper and Displacement"
            )
        for name in ("Lower", "Upper", "Displacement"):
            region[name] = _check_vector(
                f"Scenario.ChangeRegions[{i}].{name}", region[name], 3
            )

    out["Camera"]["Offset"] = _check_vector("Camera.Offset", out["Camera"]["Offset"], 3)
    if out["Camera"]["PixelNoise"] <= 0 or out["Filter"]["RenderedNoise"] <= 0:
        raise ConfigValidationError("Pixel noise and rendered noise must be > 0")

    for key in ("GyroNoise", "AccelNoise", "GyroWalk", "AccelWalk"):
        if out["Noise"][key] <= 0:
            raise ConfigValidationError(f"Noise.{key} must be > 0")

    if out["Filter"]["MaxClones"] < 2:
        raise ConfigValidationError("Filter.MaxClones must be >= 2")
    if out["Filter"]["MaxFeaturesPerFrame"] < 1:
        raise ConfigValidationError("Filter.MaxFeaturesPerFrame must be >= 1")
    if not 0.0 < out["Filter"]["Chi2Confidence"] < 1.0:
        raise ConfigValidationError("Filter.Chi2Confidence must be in (0, 1)")
    if out["Filter"]["InitMode"] not in INIT_MODES:
        raise ConfigValidationError(
            f"Filter.InitMode must be one of {INIT_MODES}, got "
            f"'{out['Filter']['InitMode']}'"
        )
    if out["Filter"]["CalibActive"] or out["Filter"]["TimeOffsetActive"]:
        raise ConfigValidationError(
            "Online extrinsic and time-offset estimation are not supported"
        )

    prior = out["PriorMap"]
    if prior["RenderRate"] > out["Camera"]["Rate"]:
        raise ConfigValidationError(
            f"PriorMap.RenderRate {prior['RenderRate']} exceeds Camera.Rate "
            f"{out['Camera']['Rate']}"
        )
    if prior["Latency"] < 0:
        raise ConfigValidationError("PriorMap.Latency must be >= 0")
    if not 0.0 < prior["SsimThreshold"] <= 1.0:
        raise ConfigValidationError("PriorMap.SsimThreshold must be in (0, 1]")
    prior["Grid"] = _check_vector("PriorMap.Grid", prior["Grid"], 2, integer=True)
    rows, cols = prior["Grid"]
    if rows <= 0 or cols <= 0:
        raise ConfigValidationError("PriorMap.Grid entries must be > 0")
    if out["Camera"]["Height"] // rows < 11 or out["Camera"]["Width"] // cols < 11:
        raise ConfigValidationError("PriorMap.Grid cells must be at least 11x11 pixels")

    init = out["InitModel"]
    init["InputSize"] = _check_vector(
        "InitModel.InputSize", init["InputSize"], 2, integer=True
    )
    init["MetricA"] = _check_vector("InitModel.MetricA", init["MetricA"], 3)
    if math.sqrt(sum(a * a for a in init["MetricA"])) >= 1.0:
        raise ConfigValidationError("InitModel.MetricA must have norm below 1")
    if init["Layers"] < 2:
        raise ConfigValidationError("InitModel.Layers must be >= 2")
    return out


def canonical_config(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """
    Fully defaulted, validated configuration with sorted keys.

    :param cfg: Partial configuration
    :type cfg: Dict[str, Any]
    :return: Canonical configuration
    :rtype: Dict[str, Any]
    """
    merged = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in cfg.items():
        if section not in merged:
            raise ConfigValidationError(f"Unknown configuration section '{section}'")
        if not isinstance(values, dict):
            raise ConfigValidationError(f"Section '{section}' must be a mapping")
        merged[section].update(copy.deepcopy(values))
    validated = validate_config(merged)
    return {s: dict(sorted(validated[s].items())) for s in sorted(validated)}


def load_experiment_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Load an experiment configuration merged over the defaults.

    :param config_file: YAML file, ``None`` for the defaults only
    :type config_file: Optional[Union[str, Path]]
    :param overrides: Values by dotted key, e.g. ``{"Filter.MapUpdates": False}``,
        applied over the file
    :type overrides: Optional[Dict[str, Any]]
    :return: Canonical configuration
    :rtype: Dict[str, Any]
    :raises ConfigValidationError: If the file is unreadable or invalid
    """
    reader = ConfigReader()
    data = {}
    if config_file is not None:
        data = reader.read_config(config_file)
    else:
        logger.debug("No configuration file given, using defaults")
    for key_path, value in (overrides or {}).items():
        if key_path.count(".") != 1:
            raise ConfigValidationError(f"Override '{key_path}' must be Section.Key")
        reader.set_config_value(data, key_path, value)
    return canonical_config(data)
