"""Feed-forward MLP f(x; theta) with a numpy fast path and a taped path.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(n, D)`` maps through ``X @ W + b``. The taped path records the
same arithmetic on an :class:`~monotone_pwl.autodiff.Tape`; bias addition
is recorded as ``ones @ b_row`` so no broadcasting is needed, which keeps
the two paths bit-identical.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .errors import ConfigurationError, MalformedModelError, ShapeMismatchError

MAGIC = "monotone-pwl-model"
FORMAT_VERSION = 1
DEFAULT_HIDDEN = (32, 11)


class Activation(str, enum.Enum):
    TANH = "tanh"
    SOFTPLUS = "softplus"
    RELU = "relu"
    IDENTITY = "identity"
    SIGMOID = "sigmoid"


HIDDEN_ACTIVATIONS = (Activation.TANH, Activation.SOFTPLUS, Activation.RELU)
OUTPUT_ACTIVATIONS = (Activation.IDENTITY, Activation.SIGMOID)


@dataclass(frozen=True)
class InitSpec:
    scheme: str = "uniform_glorot"  # or "normal_scaled"
    seed: int = 0


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: Activation = Activation.TANH
    output_activation: Activation = Activation.IDENTITY
    _n_params: int = field(init=False, repr=False)

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.hidden_activation = Activation(self.hidden_activation)
        self.output_activation = Activation(self.output_activation)
        _check_dims(self.layer_dims)
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(f"unsupported hidden activation {self.hidden_activation.value}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigurationError(f"unsupported output activation {self.output_activation.value}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ConfigurationError("need one weight matrix and bias vector per layer")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ConfigurationError(
                    f"layer {i}: expected W{shape} and b({shape[1]},), got {w.shape} and {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"layer {i}: non-finite parameters")
        self._n_params = parameter_count(self.layer_dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_params(self) -> int:
        return self._n_params

    @property
    def task(self) -> str:
        return "classification" if self.output_activation is Activation.SIGMOID else "regression"

    def flat_params(self) -> np.ndarray:
        """theta as one vector: W0 (row-major), b0, W1, b1, ..."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat_params(self, theta: np.ndarray) -> "MlpModel":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeMismatchError(f"expected {self.n_params} parameters, got {theta.size}")
        weights, biases, pos = [], [], 0
        for i in range(len(self.layer_dims) - 1):
            fan_in, fan_out = self.layer_dims[i], self.layer_dims[i + 1]
            weights.append(theta[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            pos += fan_in * fan_out
            biases.append(theta[pos:pos + fan_out].copy())
            pos += fan_out
        return MlpModel(self.layer_dims, weights, biases,
                        self.hidden_activation, self.output_activation)

    def copy(self) -> "MlpModel":
        return self.with_flat_params(self.flat_params())


def _check_dims(dims) -> None:
    if len(dims) < 2:
        raise ConfigurationError(f"layer_dims needs at least input and output sizes, got {list(dims)}")
    if any(d < 1 for d in dims):
        raise ConfigurationError(f"layer sizes must be positive, got {list(dims)}")


def parameter_count(layer_dims) -> int:
    return sum((layer_dims[i] + 1) * layer_dims[i + 1] for i in range(len(layer_dims) - 1))


def init_model(layer_dims, hidden_activation="tanh", output_activation="identity",
               init: InitSpec | None = None) -> MlpModel:
    """Fresh model with parameters drawn from ``init`` (biases start at zero)."""
    init = init or InitSpec()
    layer_dims = tuple(int(d) for d in layer_dims)
    _check_dims(layer_dims)
    rng = np.random.default_rng(init.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        if init.scheme == "uniform_glorot":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        elif init.scheme == "normal_scaled":
            w = rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))
        else:
            raise ConfigurationError(f"unknown init scheme {init.scheme!r}")
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_dims, weights, biases, hidden_activation, output_activation)


def default_dims(input_dim: int, hidden=DEFAULT_HIDDEN) -> tuple[int, ...]:
    return (input_dim, *hidden, 1)


# numpy path ---------------------------------------------------------------

def _act(name: Activation, z: np.ndarray) -> np.ndarray:
    if name is Activation.TANH:
        return np.tanh(z)
    if name is Activation.SOFTPLUS:
        return np.logaddexp(0.0, z)
    if name is Activation.RELU:
        return np.maximum(z, 0.0)
    raise ConfigurationError(name)


def _check_input(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ConfigurationError(
            f"expected inputs with {model.input_dim} features, got shape {X.shape}")
    return X


def scores(model: MlpModel, X) -> np.ndarray:
    """Pre-output-activation scores for a batch ``X`` of shape (n, D)."""
    h = _check_input(model, X)
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < last:
            h = _act(model.hidden_activation, h)
    return h[:, 0]


def predict(model: MlpModel, X) -> np.ndarray:
    s = scores(model, X)
    return expit(s) if model.output_activation is Activation.SIGMOID else s


def forward(model: MlpModel, x) -> tuple[float, float]:
    """(score, output) for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ConfigurationError(f"expected {model.input_dim} features, got shape {x.shape}")
    s = float(scores(model, x[None, :])[0])
    out = float(expit(s)) if model.output_activation is Activation.SIGMOID else s
    return s, out


# taped path ---------------------------------------------------------------

def param_names(model: MlpModel) -> list[str]:
    names = []
    for i in range(len(model.weights)):
        names += [f"W{i}", f"b{i}"]
    return names


def add_param_inputs(tape: ad.Tape, model: MlpModel) -> list[tuple[ad.Var, ad.Var]]:
    layers = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        layers.append((tape.input(f"W{i}", w), tape.input(f"b{i}", b[None, :])))
    return layers


def record_scores(model: MlpModel, X: ad.Var, layers) -> ad.Var:
    """Record the forward pass; returns the (n, 1) score node."""
    tape = X.tape
    ones = tape.const(np.ones((X.shape[0], 1)))
    act = {
        Activation.TANH: ad.tanh,
        Activation.SOFTPLUS: ad.softplus,
        Activation.RELU: ad.max0,
    }[model.hidden_activation]
    h = X
    for i, (w, b) in enumerate(layers):
        h = h @ w + ones @ b
        if i < len(layers) - 1:
            h = act(h)
    return h


def flatten_gradient(model: MlpModel, grads: dict) -> np.ndarray:
    parts = []
    for i in range(len(model.weights)):
        parts.append(np.asarray(grads[f"W{i}"]).ravel())
        parts.append(np.asarray(grads[f"b{i}"]).ravel())
    return np.concatenate(parts)


def input_gradients(model: MlpModel, X) -> np.ndarray:
    """Rows of d score / d x for each row of ``X``.

    Examples are independent, so the gradient of the summed score with
    respect to the batch matrix holds each example's input gradient.
    """
    X = _check_input(model, X)
    tape = ad.Tape()
    xv = tape.input("x", X)
    layers = add_param_inputs(tape, model)
    s = record_scores(model, xv, layers)
    seed = ad.total(s)
    return backward_x(tape, seed)


def backward_x(tape: ad.Tape, seed: ad.Var) -> np.ndarray:
    return np.asarray(ad.backward(tape, seed, wrt=["x"])["x"])


def input_gradient(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ConfigurationError(f"expected {model.input_dim} features, got shape {x.shape}")
    return input_gradients(model, x[None, :])[0]


# serialization ------------------------------------------------------------

def dumps(model: MlpModel) -> str:
    buf = io.StringIO()
    buf.write(f"{MAGIC}\n")
    buf.write(f"version {FORMAT_VERSION}\n")
    buf.write("dims " + " ".join(str(d) for d in model.layer_dims) + "\n")
    buf.write(f"hidden_activation {model.hidden_activation.value}\n")
    buf.write(f"output_activation {model.output_activation.value}\n")
    theta = model.flat_params()
    buf.write(f"params {theta.size}\n")
    for v in theta:
        buf.write(repr(float(v)) + "\n")
    return buf.getvalue()


def loads(text: str) -> MlpModel:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header_keys = ["version", "dims", "hidden_activation", "output_activation", "params"]
    if len(lines) < 1 + len(header_keys) or lines[0] != MAGIC:
        raise MalformedModelError("missing or truncated model header")
    header = {}
    for key, line in zip(header_keys, lines[1:1 + len(header_keys)]):
        parts = line.split()
        if not parts or parts[0] != key:
            raise MalformedModelError(f"expected header field {key!r}, got {line!r}")
        header[key] = parts[1:]
    try:
        version = int(header["version"][0])
        dims = tuple(int(d) for d in header["dims"])
        declared = int(header["params"][0])
    except (ValueError, IndexError) as exc:
        raise MalformedModelError(f"bad header: {exc}") from None
    if version != FORMAT_VERSION:
        raise MalformedModelError(f"unsupported model format version {version}")
    try:
        _check_dims(dims)
    except ConfigurationError as exc:
        raise MalformedModelError(str(exc)) from None
    body = lines[1 + len(header_keys):]
    if len(body) < declared:
        raise MalformedModelError(f"truncated: {declared} parameters declared, {len(body)} found")
    if len(body) > declared:
        raise MalformedModelError(f"{len(body) - declared} trailing lines after parameters")
    expected = parameter_count(dims)
    if declared != expected:
        raise ShapeMismatchError(f"dims {list(dims)} need {expected} parameters, file has {declared}")
    try:
        theta = np.array([float(v) for v in body], dtype=np.float64)
    except ValueError as exc:
        raise MalformedModelError(f"bad parameter value: {exc}") from None
    if not np.all(np.isfinite(theta)):
        raise MalformedModelError("non-finite parameter value")
    try:
        skeleton = MlpModel(dims, [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                            [np.zeros(b) for b in dims[1:]],
                            header["hidden_activation"][0], header["output_activation"][0])
    except (ValueError, IndexError) as exc:
        raise MalformedModelError(f"bad activation: {exc}") from None
    return skeleton.with_flat_params(theta)


def save_model(model: MlpModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model))


def load_model(path: str | os.PathLike) -> MlpModel:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
