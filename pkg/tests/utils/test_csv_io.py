import numpy as np
import pandas as pd

from map_vio.estimation import ImuSample
from map_vio.geometry import so3_exp
from map_vio.sim import CameraFrame
from map_vio.utils import (
    features_frame,
    imu_frame,
    read_trajectory,
    trajectory_frame,
    write_table,
)
from map_vio.utils.csv_io import TRAJECTORY_COLUMNS


def test_trajectory_file_layout(tmp_path):
    """Trajectory files start with time, JPL quaternion and position."""
    R = np.array([so3_exp(np.array([0.0, 0.0, a])) for a in (0.0, 0.5)])
    p = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    path = write_table(
        trajectory_frame([0.0, 0.1], R, p, {"nees": [1.0, 2.0]}), tmp_path / "a" / "t.csv"
    )
    df = pd.read_csv(path)
    assert list(df.columns) == TRAJECTORY_COLUMNS + ["nees"]
    np.testing.assert_allclose(df.loc[0, ["qx", "qy", "qz", "qw"]], [0.0, 0.0, 0.0, 1.0])

    t, R_back, p_back = read_trajectory(path)
    np.testing.assert_allclose(t, [0.0, 0.1])
    np.testing.assert_allclose(R_back, R, atol=1e-12)
    np.testing.assert_allclose(p_back, p)


def test_write_table_from_rows(tmp_path):
    """Dict rows become columns in insertion order."""
    path = write_table([{"seed": 0, "ate": 0.1}, {"seed": 1, "ate": 0.2}], tmp_path / "m.csv")
    df = pd.read_csv(path)
    assert list(df.columns) == ["seed", "ate"]
    assert df["seed"].tolist() == [0, 1]


def test_imu_and_feature_tables():
    """Readings give one row each, features one row per observation."""
    samples = [ImuSample(0.0, np.zeros(3), np.array([0.0, 0.0, 9.81]))]
    imu = imu_frame(samples)
    assert imu.loc[0, "az"] == 9.81

    frames = [
        CameraFrame(0.1, 0.1, {5: np.array([10.0, 20.0]), 2: np.array([1.0, 2.0])}),
        CameraFrame(0.2, 0.2),
    ]
    features = features_frame(frames)
    assert features["id"].tolist() == [2, 5]
    assert features.loc[1, "u"] == 10.0
