"""
CSV files of the experiment harness.

Trajectories are written one pose per row as ``t, qx, qy, qz, qw, px, py, pz``
with JPL quaternions, which gnuplot and pandas read directly. Column layouts
are documented in ``docs/formats.md``.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..geometry import UnitQuaternion, quat_to_rot, rot_to_quat

logger = logging.getLogger(__name__)

QUATERNION_COLUMNS = ["qx", "qy", "qz", "qw"]
POSITION_COLUMNS = ["px", "py", "pz"]
TRAJECTORY_COLUMNS = ["t"] + QUATERNION_COLUMNS + POSITION_COLUMNS


def trajectory_frame(
    t: np.ndarray,
    R_GI: np.ndarray,
    p: np.ndarray,
    extra: Optional[Mapping[str, Sequence[float]]] = None,
) -> pd.DataFrame:
    """
    Table of timestamped poses.

    :param np.ndarray t: (N,) timestamps
    :param np.ndarray R_GI: (N, 3, 3) rotations
    :param np.ndarray p: (N, 3) positions
    :param extra: Additional per-pose columns
    :type extra: Optional[Mapping[str, Sequence[float]]]
    :return: Data frame with :data:`TRAJECTORY_COLUMNS` first
    :rtype: pd.DataFrame
    """
    quats = np.array([rot_to_quat(R).as_array() for R in R_GI]).reshape(-1, 4)
    df = pd.DataFrame(
        np.column_stack([np.asarray(t, dtype=float), quats, np.asarray(p).reshape(-1, 3)]),
        columns=TRAJECTORY_COLUMNS,
    )
    for name, values in (extra or {}).items():
        df[name] = np.asarray(values, dtype=float)
    return df


def read_trajectory(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Read a trajectory file back into arrays.

    :param path: CSV written by :func:`write_table` from :func:`trajectory_frame`
    :type path: Union[str, Path]
    :return: ``(t, R_GI, p)``
    :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray]
    """
    df = pd.read_csv(path)
    R = np.array(
        [quat_to_rot(UnitQuaternion.from_array(q)) for q in df[QUATERNION_COLUMNS].to_numpy()]
    ).reshape(-1, 3, 3)
    return df["t"].to_numpy(), R, df[POSITION_COLUMNS].to_numpy()


def write_table(
    rows: Union[pd.DataFrame, Iterable[Dict[str, object]]], path: Union[str, Path]
) -> Path:
    """
    Write rows to a CSV file, creating parent directories.

    :param rows: Data frame or dict rows
    :param path: Output file
    :type path: Union[str, Path]
    :return: The written path
    :rtype: Path
    """
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    logger.debug(f"Wrote {len(df)} rows to {path}")
    return path


def imu_frame(samples: Sequence) -> pd.DataFrame:
    """IMU readings as ``t, wx, wy, wz, ax, ay, az``."""
    return pd.DataFrame(
        [[s.t, *s.omega_m, *s.accel_m] for s in samples],
        columns=["t", "wx", "wy", "wz", "ax", "ay", "az"],
    )


def features_frame(frames: Sequence) -> pd.DataFrame:
    """Captured observations as ``t, t_imu, id, u, v``, one row per observation."""
    rows = [
        [frame.t, frame.t_imu, landmark_id, *frame.observations[landmark_id]]
        for frame in frames
        for landmark_id in sorted(frame.observations)
    ]
    df = pd.DataFrame(rows, columns=["t", "t_imu", "id", "u", "v"])
    return df.astype({"id": int})
