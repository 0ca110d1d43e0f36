"""
Learned initialization model.

A pose regression network relocalizes the first captured image in the prior
map. The first IMU pose follows from the camera-IMU extrinsics, and velocity
and biases are bootstrapped from the stationary IMU window that precedes the
first image.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from skimage.color import rgb2gray, rgba2rgb
from skimage.util import img_as_float

from ..definitions import CHECKPOINT_FORMAT_VERSION
from ..estimation import ImuSample
from ..exceptions import (
    ConfigValidationError,
    GeometryError,
    LogDegeneracyError,
    ModelError,
)
from ..geometry import (
    MetricParam,
    Pose,
    Twist,
    left_jacobian,
    metric_block,
    right_jacobian,
    se3_exp,
    se3_log,
    skew,
    so3_exp,
    so3_log,
)
from ..utils import ImagePlane, area_downsample
from .mlp import (
    Layer,
    MlpModel,
    backward_batch,
    flatten_grads,
    forward_batch,
)

logger = logging.getLogger(__name__)

MAX_GYRO_BIAS = 0.5
MAX_ACCEL_BIAS = 2.0


@dataclass(frozen=True)
class TrainSample:
    """
    Training image with its label.

    :ivar ImagePlane image: Preprocessed image
    :ivar Pose gt_pose: Ground-truth ``T_W_C``
    """

    image: ImagePlane
    gt_pose: Pose


@dataclass(frozen=True)
class InitResult:
    """
    Filter initialization.

    :ivar Pose T_W_I0: First IMU pose in the map frame
    :ivar np.ndarray v0: Velocity, m/s
    :ivar np.ndarray bg0: Gyroscope bias, rad/s
    :ivar np.ndarray ba0: Accelerometer bias, m/s^2
    """

    T_W_I0: Pose
    v0: np.ndarray
    bg0: np.ndarray
    ba0: np.ndarray


@dataclass
class TrainConfig:
    """Optimizer settings and network shape for :func:`train`."""

    epochs: int = 300
    learning_rate: float = 0.01
    batch_size: int = 16
    seed: int = 0
    hidden_width: int = 256
    n_layers: int = 7
    metric: MetricParam = field(default_factory=MetricParam)
    anchor: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigValidationError(
                f"Epochs ({self.epochs}) and batch size ({self.batch_size}) must be positive"
            )
        if not self.learning_rate > 0.0:
            raise ConfigValidationError(
                f"Learning rate must be positive, got {self.learning_rate}"
            )


def preprocess(raw: np.ndarray, target_size: Tuple[int, int]) -> ImagePlane:
    """
    Grayscale, area-downsample and clip an image.

    RGB input is converted with the Rec. 709 luma weights, RGBA input is first
    blended over white. Integer images are scaled to ``[0, 1]``.

    :param np.ndarray raw: (H, W), (H, W, 3) or (H, W, 4) image
    :param target_size: Output ``(height, width)``
    :type target_size: Tuple[int, int]
    :return: Preprocessed image
    :rtype: ImagePlane
    :raises ModelError: On an empty or malformed image
    """
    raw = np.asarray(raw)
    if raw.ndim not in (2, 3) or 0 in raw.shape:
        raise ModelError(f"Cannot preprocess image of shape {raw.shape}")
    image = img_as_float(raw)
    if image.ndim == 3:
        if image.shape[2] == 4:
            image = rgba2rgb(image)
        elif image.shape[2] != 3:
            raise ModelError(f"Unsupported channel count {image.shape[2]}")
        image = rgb2gray(image)
    height, width = target_size
    if height <= 0 or width <= 0:
        raise ModelError(f"Invalid target size {target_size}")
    return ImagePlane(np.clip(area_downsample(image, height, width), 0.0, 1.0))


def _inputs(m: MlpModel, images: Sequence[ImagePlane]) -> np.ndarray:
    for img in images:
        if img.shape != m.input_size:
            raise ModelError(
                f"Model takes {m.input_size} images, got {img.shape}"
            )
    return np.stack([img.flat() for img in images])


def forward(m: MlpModel, img: ImagePlane) -> Twist:
    """
    Twist predicted for one image.

    :param MlpModel m: Model
    :param ImagePlane img: Preprocessed image of the model's input size
    :return: Twist relative to the model anchor
    :rtype: Twist
    :raises ModelError: On a size mismatch
    """
    Y, _ = forward_batch(m, _inputs(m, [img]))
    return Twist.from_vector(Y[0])


def forward_many(m: MlpModel, images: Sequence[ImagePlane]) -> List[Twist]:
    """Batched :func:`forward`."""
    if not images:
        return []
    Y, _ = forward_batch(m, _inputs(m, images))
    return [Twist.from_vector(y) for y in Y]


def relocalize(m: MlpModel, img: ImagePlane) -> Pose:
    """Camera pose ``T_W_C`` predicted for an image."""
    return m.anchor @ se3_exp(forward(m, img))


def timed_relocalize(m: MlpModel, img: ImagePlane) -> Tuple[Pose, float]:
    """:func:`relocalize` with the wall-clock seconds spent in it."""
    start = time.perf_counter()
    pose = relocalize(m, img)
    return pose, time.perf_counter() - start


def loss_and_grad(
    m: MlpModel, batch: Sequence[TrainSample], a: MetricParam
) -> Tuple[float, np.ndarray]:
    """
    Mean geodesic loss of a batch and its gradient.

    For a predicted twist ``xi`` and a label ``G`` expressed against the
    anchor, the residual is ``eps = log(exp(xi)^-1 G)`` and the loss
    ``eps^T B eps``. Its derivative is ``-2 J_r(xi)^T J_l(eps)^-T B eps``,
    which is then backpropagated through the network.

    Samples whose residual rotation is too close to a half turn are left out
    of the mean.

    :param MlpModel m: Model
    :param batch: Training samples
    :type batch: Sequence[TrainSample]
    :param MetricParam a: Metric parameter
    :return: ``(loss, gradient)`` with the gradient ordered as
        :meth:`MlpModel.get_parameters`
    :rtype: Tuple[float, np.ndarray]
    :raises ModelError: On an empty batch or if every sample is degenerate
    """
    if not batch:
        raise ModelError("Cannot compute the loss of an empty batch")
    Y, memory = forward_batch(m, _inputs(m, [s.image for s in batch]), keep=True)
    B = metric_block(a)
    anchor_inv = m.anchor.inverse()

    losses = []
    dY = np.zeros_like(Y)
    excluded = 0
    for i, (y, sample) in enumerate(zip(Y, batch)):
        target = anchor_inv @ sample.gt_pose
        try:
            eps = se3_log(se3_exp(Twist.from_vector(y)).inverse() @ target).as_vector()
        except LogDegeneracyError:
            excluded += 1
            continue
        losses.append(float(eps @ B @ eps))
        J_l_inv = np.linalg.inv(left_jacobian(eps))
        dY[i] = -2.0 * right_jacobian(y).T @ J_l_inv.T @ B @ eps

    if excluded:
        logger.warning(f"Excluded {excluded} of {len(batch)} samples near a half turn")
    if not losses:
        raise ModelError("Every sample of the batch is degenerate")
    dY /= len(losses)
    grads = backward_batch(m, memory, dY)
    return float(np.mean(losses)), flatten_grads(grads)


def dataset_loss(m: MlpModel, dataset: Sequence[TrainSample], a: MetricParam) -> float:
    """Mean geodesic loss over a dataset, without gradients."""
    twists = forward_many(m, [s.image for s in dataset])
    B = metric_block(a)
    anchor_inv = m.anchor.inverse()
    losses = []
    for xi, sample in zip(twists, dataset):
        try:
            eps = se3_log(se3_exp(xi).inverse() @ anchor_inv @ sample.gt_pose).as_vector()
        except LogDegeneracyError:
            continue
        losses.append(float(eps @ B @ eps))
    return float(np.mean(losses)) if losses else float("nan")


def train(
    dataset: Sequence[TrainSample],
    cfg: TrainConfig,
    model: Optional[MlpModel] = None,
    history: Optional[List[float]] = None,
) -> MlpModel:
    """
    Fit the network with minibatch stochastic gradient descent.

    The dataset is reshuffled every epoch with a generator seeded from
    ``cfg.seed``. The parameters with the lowest dataset loss seen so far are
    returned, so the final loss never exceeds the initial one.

    :param dataset: Training samples
    :type dataset: Sequence[TrainSample]
    :param TrainConfig cfg: Optimizer settings
    :param model: Starting model, a fresh seeded network if omitted
    :type model: Optional[MlpModel]
    :param history: If given, receives the dataset loss before training and
        after every epoch
    :type history: Optional[List[float]]
    :return: Trained model
    :rtype: MlpModel
    :raises ModelError: On an empty dataset or a non-finite loss
    """
    if not dataset:
        raise ModelError("Cannot train on an empty dataset")
    if model is None:
        model = MlpModel.create(
            dataset[0].image.shape,
            hidden_width=cfg.hidden_width,
            n_layers=cfg.n_layers,
            seed=cfg.seed,
            metric=cfg.metric,
            anchor=cfg.anchor,
        )
    else:
        model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset)

    best_loss = dataset_loss(model, dataset, cfg.metric)
    if not np.isfinite(best_loss):
        raise ModelError("Initial loss is not finite", epoch=0)
    best_theta = model.get_parameters()
    if history is not None:
        history.append(best_loss)
    logger.info(f"Training on {n} samples, initial loss {best_loss:.6f}")

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        theta = model.get_parameters()
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[k] for k in order[start : start + cfg.batch_size]]
            loss, grad = loss_and_grad(model, batch, cfg.metric)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise ModelError(f"Training diverged at epoch {epoch}", epoch=epoch)
            theta = theta - cfg.learning_rate * grad
            model.set_parameters(theta)

        epoch_loss = dataset_loss(model, dataset, cfg.metric)
        if not np.isfinite(epoch_loss):
            raise ModelError(f"Training diverged at epoch {epoch}", epoch=epoch)
        if history is not None:
            history.append(epoch_loss)
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_theta = model.get_parameters()
        logger.debug(f"Epoch {epoch}: loss {epoch_loss:.6f}")

    model.set_parameters(best_theta)
    logger.info(f"Training finished, best loss {best_loss:.6f}")
    return model


def pose_errors(pred: Pose, gt: Pose) -> Tuple[float, float]:
    """
    Rotation and camera-center errors between two ``T_W_C`` poses.

    :return: ``(degrees, meters)``
    :rtype: Tuple[float, float]
    """
    rot = np.linalg.norm(so3_log(pred.rotation @ gt.rotation.T))
    center_pred = -pred.rotation.T @ pred.translation
    center_gt = -gt.rotation.T @ gt.translation
    return float(np.degrees(rot)), float(np.linalg.norm(center_pred - center_gt))


def validation_variance(m: MlpModel, dataset: Sequence[TrainSample]) -> np.ndarray:
    """
    Per-axis error variances of a model on held-out samples.

    Rotation errors are the rotation vectors of ``R_pred R_gt^T``,
    position errors the camera-center differences.

    :return: ``(rad^2 x3, m^2 x3)``
    :rtype: np.ndarray
    """
    if not dataset:
        raise ModelError("Validation set is empty")
    errors = []
    for sample in dataset:
        pred = relocalize(m, sample.image)
        gt = sample.gt_pose
        rot = so3_log(pred.rotation @ gt.rotation.T)
        center = -pred.rotation.T @ pred.translation + gt.rotation.T @ gt.translation
        errors.append(np.concatenate([rot, center]))
    return np.mean(np.square(errors), axis=0)


def compose_first_imu(T_W_C0: Pose, T_C0_I0: Pose) -> Pose:
    """
    First IMU pose in the map frame, ``T_W_I0 = T_C0_I0 @ T_W_C0``.

    :param Pose T_W_C0: Relocalized first camera pose
    :param Pose T_C0_I0: Camera-to-IMU extrinsics
    :return: ``T_W_I0``
    :rtype: Pose
    """
    return T_C0_I0 @ T_W_C0


def bootstrap_vel_bias(
    imu_window: Sequence[ImuSample],
    R_GI0: np.ndarray,
    gravity: np.ndarray,
    max_gyro_bias: float = MAX_GYRO_BIAS,
    max_accel_bias: float = MAX_ACCEL_BIAS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Velocity and biases from a stationary window.

    The device is at rest, so the gyroscope reads its bias and the
    accelerometer reads the bias minus gravity in the IMU frame.

    :param imu_window: Samples from time zero to the first image
    :type imu_window: Sequence[ImuSample]
    :param np.ndarray R_GI0: Attitude of the first IMU frame
    :param np.ndarray gravity: Gravity in the global frame
    :param float max_gyro_bias: Sanity bound on the gyroscope bias norm
    :param float max_accel_bias: Sanity bound on the accelerometer bias norm
    :return: ``(v0, bg0, ba0)``
    :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray]
    :raises ModelError: On an empty window or implausible biases
    """
    if not imu_window:
        raise ModelError("Cannot bootstrap from an empty IMU window")
    omega = np.mean([s.omega_m for s in imu_window], axis=0)
    accel = np.mean([s.accel_m for s in imu_window], axis=0)
    bg0 = omega
    ba0 = accel + np.asarray(R_GI0, dtype=float) @ np.asarray(gravity, dtype=float)
    if np.linalg.norm(bg0) >= max_gyro_bias or np.linalg.norm(ba0) >= max_accel_bias:
        raise ModelError(
            f"Bootstrapped biases |bg|={np.linalg.norm(bg0):.4f}, "
            f"|ba|={np.linalg.norm(ba0):.4f} are implausible for a stationary start"
        )
    return np.zeros(3), bg0, ba0


def init_from_pose(
    T_W_I0: Pose, imu_window: Sequence[ImuSample], gravity: np.ndarray
) -> InitResult:
    """
    Gravity-align a first IMU pose and bootstrap velocity and biases.

    The IMU position is kept; only roll and pitch change.

    :param Pose T_W_I0: First IMU pose estimate
    :param imu_window: Stationary samples before the first image
    :type imu_window: Sequence[ImuSample]
    :param np.ndarray gravity: Gravity in the global frame
    :return: Initialization
    :rtype: InitResult
    :raises ModelError: On an empty window or implausible biases
    """
    if not imu_window:
        raise ModelError("Cannot bootstrap from an empty IMU window")
    p_GI = -T_W_I0.rotation.T @ T_W_I0.translation
    accel = np.mean([s.accel_m for s in imu_window], axis=0)
    R_GI = gravity_align(T_W_I0.rotation, accel, gravity)
    v0, bg0, ba0 = bootstrap_vel_bias(imu_window, R_GI, gravity)
    return InitResult(Pose(R_GI, -R_GI @ p_GI), v0, bg0, ba0)


def initialize(
    m: MlpModel,
    img: ImagePlane,
    T_C0_I0: Pose,
    imu_window: Sequence[ImuSample],
    gravity: np.ndarray,
) -> InitResult:
    """Relocalize the first image, then align and bootstrap the IMU state."""
    return init_from_pose(
        compose_first_imu(relocalize(m, img), T_C0_I0), imu_window, gravity
    )


def frame_covariance(p_GI0: np.ndarray, var_rot: float, var_pos: float) -> np.ndarray:
    """
    Covariance of the map-to-global transform error.

    The filter takes its global frame from the estimated first IMU pose. An
    isotropic attitude error of variance ``var_rot`` and position error of
    variance ``var_pos`` at ``p_GI0`` become a frame error whose translation
    picks up the lever arm ``p_GI0 x theta``.

    :param np.ndarray p_GI0: First IMU position
    :param float var_rot: Attitude error variance per axis, rad^2
    :param float var_pos: Position error variance per axis, m^2
    :return: 6x6 covariance, rotation first
    :rtype: np.ndarray
    """
    P = skew(np.asarray(p_GI0, dtype=float))
    Sigma = np.zeros((6, 6))
    Sigma[:3, :3] = var_rot * np.eye(3)
    Sigma[:3, 3:] = var_rot * P.T
    Sigma[3:, :3] = var_rot * P
    Sigma[3:, 3:] = var_pos * np.eye(3) + var_rot * P @ P.T
    return Sigma


def save_checkpoint(m: MlpModel, path: Union[str, Path]) -> None:
    """
    Write a model to an ``.npz`` checkpoint.

    The archive holds a JSON ``header`` and arrays ``W0, b0, W1, b1, ...``.
    The layout is documented in ``docs/formats.md``.

    :param MlpModel m: Model
    :param path: Output file
    :type path: Union[str, Path]
    """
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layer_dims": m.layer_dims,
        "activations": [layer.activation for layer in m.layers],
        "metric_a": [float(x) for x in m.metric.a],
        "input_size": list(m.input_size),
        "anchor": m.anchor.matrix().tolist(),
        "val_variance": [float(x) for x in m.val_variance],
    }
    arrays = {"header": np.array(json.dumps(header))}
    for k, layer in enumerate(m.layers):
        arrays[f"W{k}"] = layer.W
        arrays[f"b{k}"] = layer.b
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"Wrote checkpoint with layers {m.layer_dims} to {path}")


def load_checkpoint(path: Union[str, Path]) -> MlpModel:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    :param path: Checkpoint file
    :type path: Union[str, Path]
    :return: Model
    :rtype: MlpModel
    :raises ModelError: If the file is missing, of another version or malformed
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            version = header.get("format_version")
            if version != CHECKPOINT_FORMAT_VERSION:
                raise ModelError(
                    f"Checkpoint format version {version!r} is not supported "
                    f"(expected {CHECKPOINT_FORMAT_VERSION})"
                )
            layers = [
                Layer(data[f"W{k}"], data[f"b{k}"], activation)
                for k, activation in enumerate(header["activations"])
            ]
        model = MlpModel(
            layers=layers,
            input_size=tuple(header["input_size"]),
            metric=MetricParam(header["metric_a"]),
            anchor=Pose.from_matrix(np.asarray(header["anchor"])),
            val_variance=header["val_variance"],
        )
    except ModelError:
        raise
    except (OSError, KeyError, ValueError, TypeError, GeometryError) as e:
        raise ModelError(f"Cannot read checkpoint {path}: {e}") from e
    if model.layer_dims != header["layer_dims"]:
        raise ModelError(
            f"Checkpoint dims {header['layer_dims']} do not match its arrays {model.layer_dims}"
        )
    logger.debug(f"Loaded checkpoint with layers {model.layer_dims} from {path}")
    return model


def gravity_align(R_GI: np.ndarray, accel_mean: np.ndarray, gravity: np.ndarray) -> np.ndarray:
    """
    Correct roll and pitch so the attitude explains the mean specific force.

    The smallest rotation taking the predicted specific force ``-R_GI g`` onto
    the measured one is applied on the IMU side, which leaves the heading
    about gravity unchanged.

    :param np.ndarray R_GI: Attitude estimate
    :param np.ndarray accel_mean: Mean accelerometer reading at rest
    :param np.ndarray gravity: Gravity in the global frame
    :return: Aligned attitude
    :rtype: np.ndarray
    """
    predicted = -np.asarray(R_GI, dtype=float) @ np.asarray(gravity, dtype=float)
    measured = np.asarray(accel_mean, dtype=float)
    axis = np.cross(predicted, measured)
    angle = np.arctan2(np.linalg.norm(axis), predicted @ measured)
    if np.linalg.norm(axis) == 0.0:
        return np.asarray(R_GI, dtype=float).copy()
    return so3_exp(angle * axis / np.linalg.norm(axis)) @ R_GI
