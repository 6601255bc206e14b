"""Feed-forward ReLU/softmax network built on numpy.

Weight matrix ``d`` has shape ``(size of layer d-1, size of layer d)``: rows
index the incoming layer, columns the outgoing one. Biases are stored as
separate vectors so a neuron's bias can travel with its column when layers
are permuted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class ShapeError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_sizes: Tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if len(self.hidden_sizes) < 1:
            raise ValueError("at least one hidden layer is required")
        if min(self.layer_sizes) < 1:
            raise ValueError(f"layer sizes must be positive, got {self.layer_sizes}")

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.hidden_sizes)


@dataclass
class Network:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    architecture: Architecture

    def __post_init__(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("expected one weight matrix and one bias per non-input layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for d, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[d], sizes[d + 1]) or b.shape != (sizes[d + 1],):
                raise ShapeError(
                    f"layer {d + 1}: got W{w.shape}, b{b.shape}, "
                    f"expected W{(sizes[d], sizes[d + 1])}, b{(sizes[d + 1],)}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {d + 1} has non-finite parameters")

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.architecture)

    def parameters(self) -> List[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ShapeError("inputs must be n x m and labels a length-n vector")
        if len(self.inputs) != len(self.labels):
            raise ShapeError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs contain NaN or Inf")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128
    epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


def init_network(arch: Architecture, seed: int) -> Network:
    """Draw weights from N(0, 1/sqrt(fan_in)) with zero biases."""
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    weights = [rng.normal(0.0, fan_in ** -0.5, size=(fan_in, fan_out)) for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return Network(weights, biases, arch)


def _check_inputs(net: Network, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.architecture.input_dim:
        raise ShapeError(f"inputs of shape {x.shape} do not match input_dim {net.architecture.input_dim}")
    return x


def _logits(net: Network, x: np.ndarray):
    hidden, pre = [], []
    a = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        hidden.append(a)
    return hidden, pre, a @ net.weights[-1] + net.biases[-1]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(net: Network, inputs) -> Tuple[List[np.ndarray], np.ndarray]:
    """Return post-ReLU activations of every hidden layer and class probabilities."""
    x = _check_inputs(net, inputs)
    hidden, _, logits = _logits(net, x)
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return hidden, shifted / shifted.sum(axis=1, keepdims=True)


def evaluate(net: Network, data: Dataset) -> Tuple[float, float]:
    """Mean cross-entropy and accuracy (argmax ties go to the lowest class)."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if data.labels.max() >= net.architecture.output_dim:
        raise ValueError("labels exceed the network's output_dim")
    _, _, logits = _logits(net, _check_inputs(net, data.inputs))
    logp = _log_softmax(logits)
    rows = np.arange(len(data))
    loss = float(-logp[rows, data.labels].mean())
    accuracy = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    return loss, accuracy


def loss_and_gradients(net: Network, inputs: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient, ordered like ``net.parameters()``."""
    x = _check_inputs(net, inputs)
    hidden, pre, logits = _logits(net, x)
    logp = _log_softmax(logits)
    n = len(labels)
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())

    delta = np.exp(logp)
    delta[rows, labels] -= 1.0
    delta /= n
    activations = [x, *hidden]
    grad_w: List[np.ndarray] = [None] * len(net.weights)
    grad_b: List[np.ndarray] = [None] * len(net.biases)
    for d in range(len(net.weights) - 1, -1, -1):
        grad_w[d] = activations[d].T @ delta
        grad_b[d] = delta.sum(axis=0)
        if d > 0:
            delta = (delta @ net.weights[d].T) * (pre[d - 1] > 0)
    return loss, [*grad_w, *grad_b]


def train_adam(net: Network, train: Dataset, cfg: TrainConfig):
    """Minibatch Adam on cross-entropy. The input network is left untouched.

    Returns the trained copy and a per-epoch history of
    ``(epoch, train_loss, train_accuracy)`` measured on the full training set.
    """
    net = net.copy()
    params = net.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    n = len(train)
    step = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(net, train.inputs[idx], train.labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch, loss)
            step += 1
            correction1 = 1.0 - cfg.beta1 ** step
            correction2 = 1.0 - cfg.beta2 ** step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (mi / correction1) / (np.sqrt(vi / correction2) + cfg.epsilon)
        history.append((epoch, *evaluate(net, train)))
    return net, history


# Binary network format, version 1 (all integers little-endian uint32,
# all reals little-endian IEEE float64):
#   magic b"SCNET", version, number of layers L (input + hidden + output),
#   L layer sizes, then for each of the L-1 weight layers the weight matrix
#   in row-major order followed by its bias vector.
NETWORK_MAGIC = b"SCNET"
NETWORK_FORMAT_VERSION = 1


def network_to_bytes(net: Network) -> bytes:
    sizes = net.architecture.layer_sizes
    parts = [NETWORK_MAGIC, struct.pack("<II", NETWORK_FORMAT_VERSION, len(sizes)), struct.pack(f"<{len(sizes)}I", *sizes)]
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def network_from_bytes(blob: bytes) -> Network:
    if blob[:5] != NETWORK_MAGIC:
        raise ValueError("not a network file (bad magic)")
    version, n_layers = struct.unpack_from("<II", blob, 5)
    if version != NETWORK_FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {version}")
    offset = 13
    sizes = struct.unpack_from(f"<{n_layers}I", blob, offset)
    offset += 4 * n_layers
    expected = offset + 8 * sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(blob) != expected:
        raise ValueError(f"network file has {len(blob)} bytes, expected {expected}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=offset).reshape(fan_in, fan_out)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    arch = Architecture(sizes[0], tuple(sizes[1:-1]), sizes[-1])
    return Network(weights, biases, arch)


def save_network(net: Network, path) -> None:
    Path(path).write_bytes(network_to_bytes(net))


def load_network(path) -> Network:
    return network_from_bytes(Path(path).read_bytes())


class MLPClassifier(BaseEstimator, ClassifierMixin):
    """Estimator front-end to :func:`train_adam`.

    Labels must already be integer codes ``0..n_classes-1`` so that the output
    units of networks trained separately line up.
    """

    def __init__(self, hidden_sizes: Sequence[int] = (64,), n_classes=None, learning_rate=1e-3,
                 batch_size=128, epochs=5, seed=0):
        self.hidden_sizes = hidden_sizes
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.int64)
        n_classes = self.n_classes or int(y.max()) + 1
        arch = Architecture(X.shape[1], tuple(self.hidden_sizes), n_classes)
        cfg = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                          epochs=self.epochs, seed=self.seed)
        self.network_, self.history_ = train_adam(init_network(arch, self.seed), Dataset(X, y), cfg)
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        return forward(self.network_, check_array(X, dtype=np.float64))[1]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def hidden_activations(self, X) -> List[np.ndarray]:
        check_is_fitted(self, "network_")
        return forward(self.network_, check_array(X, dtype=np.float64))[0]
