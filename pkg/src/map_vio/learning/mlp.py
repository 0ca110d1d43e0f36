"""
Fully connected network with explicit backpropagation.

Every hidden layer is affine followed by a rectifier; the output layer is
affine. The forward pass keeps its intermediate values so the backward pass
can reuse them.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ModelError
from ..geometry import MetricParam, Pose

logger = logging.getLogger(__name__)

RELU = "relu"
LINEAR = "linear"
ACTIVATIONS = (RELU, LINEAR)
OUTPUT_DIM = 6
OUTPUT_INIT_SCALE = 0.01


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, 1.0, 0.0)


@dataclass
class Layer:
    """
    Affine map ``y = W x + b`` followed by an activation.

    :ivar np.ndarray W: (out, in) weights
    :ivar np.ndarray b: (out,) biases
    :ivar str activation: ``relu`` or ``linear``
    """

    W: np.ndarray
    b: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"Unknown activation '{self.activation}'")
        if self.W.ndim != 2 or self.W.shape[0] != self.b.shape[0]:
            raise ModelError(
                f"Layer weights {self.W.shape} do not match biases {self.b.shape}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ModelError("Layer parameters must be finite")


@dataclass
class MlpModel:
    """
    Pose regression network and the metadata it is used with.

    The network maps a flattened image to a twist; the predicted camera pose
    is ``anchor @ se3_exp(twist)``.

    :ivar List[Layer] layers: Layers in evaluation order
    :ivar Tuple[int, int] input_size: ``(height, width)`` of input images
    :ivar MetricParam metric: Metric of the training loss
    :ivar Pose anchor: Reference ``T_W_C`` the twist is expressed against
    :ivar np.ndarray val_variance: Per-axis error variances on validation data,
        ``(rotation rad^2 x3, position m^2 x3)``
    """

    layers: List[Layer]
    input_size: Tuple[int, int]
    metric: MetricParam = field(default_factory=MetricParam)
    anchor: Pose = field(default_factory=Pose.identity)
    val_variance: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        if not self.layers:
            raise ModelError("A model needs at least one layer")
        self.input_size = tuple(int(s) for s in self.input_size)
        self.val_variance = np.asarray(self.val_variance, dtype=float).reshape(6)
        dims = self.layer_dims
        if dims[0] != self.input_size[0] * self.input_size[1]:
            raise ModelError(
                f"First layer takes {dims[0]} inputs, images give "
                f"{self.input_size[0] * self.input_size[1]}"
            )
        for prev, layer in zip(self.layers, self.layers[1:]):
            if layer.W.shape[1] != prev.W.shape[0]:
                raise ModelError(
                    f"Layer chain broken: {prev.W.shape} followed by {layer.W.shape}"
                )
        if dims[-1] != OUTPUT_DIM:
            raise ModelError(f"Output dimension {dims[-1]} must be {OUTPUT_DIM}")

    @classmethod
    def create(
        cls,
        input_size: Tuple[int, int],
        hidden_width: int = 256,
        n_layers: int = 7,
        seed: int = 0,
        zero: bool = False,
        **kwargs,
    ) -> "MlpModel":
        """
        Randomly initialized network.

        Hidden layers use He initialization; the output layer starts small so
        initial predictions stay near the anchor.

        :param input_size: ``(height, width)`` of input images
        :type input_size: Tuple[int, int]
        :param int hidden_width: Units per hidden layer
        :param int n_layers: Number of affine layers
        :param int seed: Initialization seed
        :param bool zero: All-zero parameters
        :return: Model
        :rtype: MlpModel
        """
        if n_layers < 1 or hidden_width < 1:
            raise ModelError(f"Invalid network shape {n_layers}x{hidden_width}")
        rng = np.random.default_rng(seed)
        dims = [input_size[0] * input_size[1]] + [hidden_width] * (n_layers - 1)
        dims.append(OUTPUT_DIM)
        layers = []
        for k, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            last = k == n_layers - 1
            scale = np.sqrt(2.0 / n_in) * (OUTPUT_INIT_SCALE if last else 1.0)
            W = np.zeros((n_out, n_in)) if zero else rng.normal(size=(n_out, n_in)) * scale
            layers.append(Layer(W, np.zeros(n_out), LINEAR if last else RELU))
        return cls(layers=layers, input_size=input_size, **kwargs)

    @property
    def layer_dims(self) -> List[int]:
        return [self.layers[0].W.shape[1]] + [layer.W.shape[0] for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def n_parameters(self) -> int:
        return sum(layer.W.size + layer.b.size for layer in self.layers)

    def get_parameters(self) -> np.ndarray:
        """All parameters as one vector, layer by layer, weights before biases."""
        return np.concatenate(
            [np.concatenate([layer.W.ravel(), layer.b]) for layer in self.layers]
        )

    def set_parameters(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_parameters(),):
            raise ModelError(
                f"Expected {self.n_parameters()} parameters, got {theta.shape}"
            )
        offset = 0
        for layer in self.layers:
            n = layer.W.size
            layer.W = theta[offset : offset + n].reshape(layer.W.shape).copy()
            offset += n
            layer.b = theta[offset : offset + layer.b.size].copy()
            offset += layer.b.size

    def copy(self) -> "MlpModel":
        return MlpModel(
            layers=[Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers],
            input_size=self.input_size,
            metric=self.metric,
            anchor=self.anchor,
            val_variance=self.val_variance.copy(),
        )


def forward_batch(
    m: MlpModel, X: np.ndarray, keep: bool = False
) -> Tuple[np.ndarray, Optional[list]]:
    """
    Evaluate the network on a batch.

    :param MlpModel m: Model
    :param np.ndarray X: (N, input_dim) inputs
    :param bool keep: Return the intermediate values for backpropagation
    :return: ``(Y, memory)`` with Y of shape (N, output_dim)
    :rtype: Tuple[np.ndarray, Optional[list]]
    :raises ModelError: On an input dimension mismatch
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != m.input_dim:
        raise ModelError(f"Model takes {m.input_dim} inputs, got {X.shape[1]}")
    memory = []
    a = X
    for layer in m.layers:
        z = a @ layer.W.T + layer.b
        if keep:
            memory.append((a, z))
        a = relu(z) if layer.activation == RELU else z
    return a, (memory if keep else None)


def backward_batch(
    m: MlpModel, memory: list, dY: np.ndarray
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Gradients of a scalar with respect to every layer.

    :param MlpModel m: Model
    :param list memory: Intermediate values from :func:`forward_batch`
    :param np.ndarray dY: (N, output_dim) derivative of the scalar w.r.t. outputs
    :return: ``(dW, db)`` per layer
    :rtype: List[Tuple[np.ndarray, np.ndarray]]
    """
    grads = [None] * len(m.layers)
    d = np.asarray(dY, dtype=float)
    for k in range(len(m.layers) - 1, -1, -1):
        layer = m.layers[k]
        a_prev, z = memory[k]
        if layer.activation == RELU:
            d = d * relu_grad(z)
        grads[k] = (d.T @ a_prev, d.sum(axis=0))
        d = d @ layer.W
    return grads


def flatten_grads(grads: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Gradients in the order of :meth:`MlpModel.get_parameters`."""
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])
