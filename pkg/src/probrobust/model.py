"""Small dense feedforward classifiers with exact backpropagation."""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass
from typing import IO, Sequence, Union

import numpy as np

from . import _kernels
from .errors import InvalidInputError, NumericFaultError

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        b = np.array(self.bias, dtype=np.float64, copy=True).reshape(-1)
        if w.ndim != 2:
            raise InvalidInputError(f"layer weights must be 2-D, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise InvalidInputError(f"bias length {b.shape[0]} != weight rows {w.shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InvalidInputError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Network:
    """Immutable classifier; safe to share between threads."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidInputError("network needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.in_dim != prev.out_dim:
                raise InvalidInputError(
                    f"layer input size {cur.in_dim} does not match previous output {prev.out_dim}"
                )
        if layers[-1].out_dim < 2:
            raise InvalidInputError("class_count must be at least 2")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def class_count(self) -> int:
        return self.layers[-1].out_dim


@dataclass(frozen=True)
class LabeledPoint:
    features: np.ndarray
    label: int


def init_network(sizes: Sequence[int], seed: int = 0, hidden_activation: str = "relu") -> Network:
    """He-initialised network; ``sizes`` = [input_dim, hidden..., class_count]."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        act = "identity" if i == len(sizes) - 2 else hidden_activation
        layers.append(Layer(w, np.zeros(n_out), act))
    return Network(tuple(layers))


def _as_batch(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise InvalidInputError(f"expected inputs of dimension {net.input_dim}, got shape {X.shape}")
    return X


def forward_batch(net: Network, X) -> np.ndarray:
    """Logits for each row of ``X``; rows are evaluated independently."""
    a = _as_batch(net, X)
    for layer in net.layers:
        a = _kernels.dense(a, layer.weights, layer.bias, layer.activation == "relu")
    return a


def forward(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("forward expects a single vector")
    return forward_batch(net, x)[0]


def predict_batch(net: Network, X) -> np.ndarray:
    # np.argmax returns the first maximal index: ties go to the lowest class.
    return np.argmax(forward_batch(net, X), axis=1)


def predict(net: Network, x) -> int:
    return int(np.argmax(forward(net, x)))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_labels(net: Network, y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y))
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError("labels must be integers")
    if np.any(y < 0) or np.any(y >= net.class_count):
        raise InvalidInputError(f"label out of range [0, {net.class_count})")
    return y.astype(np.int64)


def loss_ce(net: Network, x, y: int) -> float:
    """Softmax cross-entropy of a single labelled point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("loss_ce expects a single vector")
    yy = _check_labels(net, y)
    logits = forward(net, x)
    if not np.all(np.isfinite(logits)):
        raise NumericFaultError("non-finite logits")
    return float(-log_softmax(logits)[yy[0]])


def loss_ce_batch(net: Network, X, Y) -> np.ndarray:
    """Per-row cross-entropy."""
    X = _as_batch(net, X)
    Y = _check_labels(net, Y)
    if Y.size == 1 and X.shape[0] > 1:
        Y = np.full(X.shape[0], Y[0])
    logits = forward_batch(net, X)
    if not np.all(np.isfinite(logits)):
        raise NumericFaultError("non-finite logits")
    return -log_softmax(logits)[np.arange(X.shape[0]), Y]


def _backprop(net: Network, X: np.ndarray, Y: np.ndarray, weights: np.ndarray, need_params: bool):
    """Weighted CE loss sum, parameter gradients and per-row input gradients."""
    acts = [X]
    pre = []
    a = X
    for layer in net.layers:
        z = a @ layer.weights.T + layer.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(a)
    logits = acts[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericFaultError("non-finite logits during backpropagation")
    lsm = log_softmax(logits)
    rows = np.arange(X.shape[0])
    losses = -lsm[rows, Y]
    dz = np.exp(lsm)
    dz[rows, Y] -= 1.0
    dz *= weights[:, None]
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            dz = dz * (pre[i] > 0.0)
        if need_params:
            grads[i] = (dz.T @ acts[i], dz.sum(axis=0))
        dz = dz @ layer.weights
    return losses, grads, dz


def _finite_or_raise(arrays, what: str):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericFaultError(f"non-finite {what}")


def grad_input_batch(net: Network, X, Y) -> np.ndarray:
    """Per-row gradient of the CE loss with respect to the input."""
    X = _as_batch(net, X)
    Y = _check_labels(net, Y)
    if Y.size == 1 and X.shape[0] > 1:
        Y = np.full(X.shape[0], Y[0])
    _, _, gx = _backprop(net, X, Y, np.ones(X.shape[0]), need_params=False)
    _finite_or_raise([gx], "input gradient")
    return gx


def grad_input(net: Network, x, y: int) -> np.ndarray:
    return grad_input_batch(net, np.asarray(x, dtype=np.float64)[None, :], [y])[0]


def loss_and_grads(net: Network, X, Y, weights=None):
    """Weighted mean CE loss and its parameter gradients.

    ``weights`` are per-row coefficients; the loss is ``sum(w_i * l_i) / n``.
    Returns ``(loss, grads)`` with ``grads`` a list of ``(dW, db)`` per layer.
    """
    X = _as_batch(net, X)
    Y = _check_labels(net, Y)
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    losses, grads, _ = _backprop(net, X, Y, w / n, need_params=True)
    loss = float(np.dot(w, losses) / n)
    if not np.isfinite(loss):
        raise NumericFaultError("non-finite loss")
    _finite_or_raise([g for pair in grads for g in pair], "parameter gradient")
    return loss, grads


def grad_params(net: Network, x, y: int):
    """Parameter gradients of the single-point CE loss, as ``[(dW, db), ...]``."""
    return loss_and_grads(net, np.asarray(x, dtype=np.float64)[None, :], [y])[1]


def sgd_step(net: Network, grads, lr: float) -> Network:
    if not lr >= 0.0:
        raise InvalidInputError("learning rate must be non-negative")
    if len(grads) != len(net.layers):
        raise InvalidInputError("gradient structure does not match the network")
    _finite_or_raise([g for pair in grads for g in pair], "gradient")
    layers = []
    for layer, (dw, db) in zip(net.layers, grads):
        layers.append(Layer(layer.weights - lr * dw, layer.bias - lr * db, layer.activation))
    return Network(tuple(layers))


def scale_output(net: Network, c: float) -> Network:
    """Multiply the final layer's weights and bias by ``c``."""
    *head, last = net.layers
    return Network(tuple(head) + (Layer(last.weights * c, last.bias * c, last.activation),))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "class_count": net.class_count,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ],
    }


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise InvalidInputError("model document must be an object")
    missing = {"input_dim", "class_count", "layers"} - set(doc)
    if missing:
        raise InvalidInputError(f"model document missing fields: {sorted(missing)}")
    try:
        layers = []
        for spec in doc["layers"]:
            extra = set(spec) - {"weights", "bias", "activation"}
            if extra:
                raise InvalidInputError(f"unknown layer fields: {sorted(extra)}")
            w = np.array(spec["weights"], dtype=np.float64)
            if w.ndim == 1 and w.size == 0:
                w = w.reshape(0, 0)
            layers.append(Layer(w, spec["bias"], spec.get("activation", "relu")))
        net = Network(tuple(layers))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed model document: {exc}") from exc
    if net.input_dim != doc["input_dim"] or net.class_count != doc["class_count"]:
        raise InvalidInputError("declared input_dim/class_count disagree with layer shapes")
    return net


PathOrFile = Union[str, os.PathLike, IO[str]]


def save_model(net: Network, sink: PathOrFile) -> None:
    # json writes floats with repr(), the shortest round-trip decimal.
    text = json.dumps(network_to_dict(net), indent=1)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w") as fh:
            fh.write(text + "\n")
    else:
        sink.write(text + "\n")


def load_model(source: PathOrFile) -> Network:
    try:
        if isinstance(source, (str, os.PathLike)):
            with open(source) as fh:
                doc = json.load(fh)
        else:
            doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"model file is not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def dumps_model(net: Network) -> str:
    buf = io.StringIO()
    save_model(net, buf)
    return buf.getvalue()
