import pytest

from map_vio.config_reader import canonical_config


@pytest.fixture
def short_overrides(tmp_path):
    """Fixture providing a partial configuration of a few-second run on a sparse scene."""
    return {
        "General": {"OutputDirectory": str(tmp_path / "results"), "Seeds": [0, 1]},
        "Logging": {"LogDirectory": str(tmp_path / "logs")},
        "Scenario": {
            "Duration": 3.0,
            "ImuRate": 100.0,
            "StationaryTime": 1.0,
            "RampTime": 1.0,
            "TableLandmarks": 80,
            "WallLandmarks": 40,
        },
        "Camera": {"Rate": 10.0},
        "Filter": {"MaxClones": 5, "MaxFeaturesPerFrame": 40},
        "InitModel": {
            "Checkpoint": str(tmp_path / "init_model.npz"),
            "InputSize": [8, 8],
            "HiddenWidth": 16,
            "Layers": 3,
            "Epochs": 3,
            "BatchSize": 4,
            "TrainSamples": 8,
            "ValidationSamples": 4,
        },
        "Acceptance": {"EvalSamples": 2, "RefineIterations": 3},
    }


@pytest.fixture
def short_config(short_overrides):
    """Fixture providing a canonical configuration for short runs."""
    return canonical_config(short_overrides)
