from pathlib import Path

DEFAULT_CONFIG_FILE = Path("conf/experiment.yaml")
MAP_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1

INIT_MODES = ("learned", "ground-truth", "perturbed")

DEFAULT_CONFIG = {
    "General": {
        "Verbosity": False,
        "OutputDirectory": "results",
        "Seeds": [0],
        "Workers": 2,
    },
    "Logging": {
        "LogLevel": "INFO",
        "LogDirectory": "logs",
        "LogFile": "mvio.log",
    },
    "Scenario": {
        "Duration": 30.0,
        "ImuRate": 200.0,
        "Radius": 1.5,
        "Height": 0.5,
        "AngularRate": 0.2,
        "BobAmplitude": 0.05,
        "BobCycles": 3,
        "StartAzimuth": 0.0,
        "StationaryTime": 1.0,
        "RampTime": 2.0,
        "TableLandmarks": 200,
        "WallLandmarks": 100,
        "SceneSeed": 0,
        "EnvironmentChange": False,
        "ChangeRegions": [
            {
                "Lower": [0.0, -0.5, -0.01],
                "Upper": [0.5, 0.0, 0.01],
                "Displacement": [0.03, 0.03, 0.0],
            }
        ],
    },
    "Camera": {
        "Rate": 30.0,
        "Width": 160,
        "Height": 120,
        "Focal": 200.0,
        "Offset": [0.0, 0.0, 0.0],
        "TimeOffset": 0.0,
        "PixelNoise": 1.0,
    },
    "Noise": {
        "GyroNoise": 1.7e-4,
        "AccelNoise": 2.0e-3,
        "GyroWalk": 2.0e-5,
        "AccelWalk": 3.0e-3,
        "Enabled": True,
    },
    "Filter": {
        "MapUpdates": True,
        "MaxClones": 11,
        "MaxFeaturesPerFrame": 60,
        "RenderedNoise": 1.0,
        "Chi2Confidence": 0.95,
        "CheckCovariance": False,
        "InitMode": "ground-truth",
        "PerturbRotationDeg": 2.0,
        "PerturbPositionCm": 5.0,
        "CalibActive": False,
        "TimeOffsetActive": False,
    },
    "PriorMap": {
        "RenderRate": 2.0,
        "Latency": 0.2,
        "Grid": [8, 8],
        "SsimThreshold": 0.8,
        "FastThreshold": 0.1,
        "AssociationRadius": 2.0,
        "MapFile": "",
    },
    "InitModel": {
        "Checkpoint": "results/init_model.npz",
        "InputSize": [32, 32],
        "HiddenWidth": 256,
        "Layers": 7,
        "Epochs": 300,
        "LearningRate": 0.01,
        "BatchSize": 16,
        "MetricA": [0.0, 0.0, 0.0],
        "TrainSamples": 600,
        "ValidationSamples": 60,
        "TrainSector": 0.6,
        "PositionJitter": 0.05,
        "RotationJitterDeg": 3.0,
        "Seed": 0,
    },
    "Acceptance": {
        "MaxPositionAte": 0.2,
        "MinMapImprovement": 0.2,
        "MaxInitRotationDeg": 5.0,
        "MaxInitPositionCm": 5.0,
        "MaxInitLatency": 0.5,
        "MinSpeedup": 10.0,
        "RefineIterations": 40,
        "EvalSamples": 20,
    },
}
