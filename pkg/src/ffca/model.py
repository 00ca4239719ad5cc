"""Dense MLP and exact input derivatives of its scalar score."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    CostGuardError,
    DimensionMismatchError,
    InvalidArchitectureError,
    SmoothingRequiredError,
)

CHECKPOINT_VERSION = 1
DEFAULT_BETA = 10.0
DEFAULT_HESSIAN_CAP = 256


class TaskKind(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def check_task(task, n_outputs: int) -> TaskKind:
    task = TaskKind(task)
    if task is TaskKind.REGRESSION and n_outputs != 1:
        raise InvalidArchitectureError(f"regression needs exactly one output, model has {n_outputs}")
    if task is TaskKind.CLASSIFICATION and n_outputs < 2:
        raise InvalidArchitectureError("classification needs at least two outputs")
    return task


@dataclass
class Mlp:
    """Fully connected network; hidden layers share one activation, the output is affine.

    ``weights[l]`` has shape ``(layer_dims[l + 1], layer_dims[l])``.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    beta: float | None = None
    _frozen: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        self.layer_dims = [int(v) for v in self.layer_dims]
        _validate_dims(self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise InvalidArchitectureError("need one weight matrix and bias vector per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l + 1], self.layer_dims[l])
            if W.shape != shape or b.shape != (shape[0],):
                raise InvalidArchitectureError(
                    f"layer {l}: expected weight {shape} and bias {(shape[0],)}, got {W.shape} and {b.shape}"
                )
        if self.activation not in ("relu", "softplus"):
            raise InvalidArchitectureError(f"unknown activation {self.activation!r}")
        if self.activation == "softplus":
            if self.beta is None or not self.beta > 0:
                raise ValueError("softplus activation needs beta > 0")
            self.beta = float(self.beta)
        else:
            self.beta = None

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    @property
    def smooth(self) -> bool:
        return self.activation == "softplus"

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.beta,
        )

    def read_only(self) -> "Mlp":
        """A view over the same parameters whose arrays cannot be written."""
        ws, bs = [], []
        for W, b in zip(self.weights, self.biases):
            W, b = W.view(), b.view()
            W.flags.writeable = False
            b.flags.writeable = False
            ws.append(W)
            bs.append(b)
        return Mlp(list(self.layer_dims), ws, bs, self.activation, self.beta, _frozen=True)

    def _kernel_args(self):
        act = kernels.SOFTPLUS if self.smooth else kernels.RELU
        return self.weights, self.biases, act, (self.beta or 1.0)


def _validate_dims(dims):
    if len(dims) < 2:
        raise InvalidArchitectureError("layer_dims needs at least an input and an output dimension")
    if any(v < 1 for v in dims):
        raise InvalidArchitectureError(f"all layer dimensions must be >= 1, got {dims}")


def init_model(layer_dims, seed: int = 0) -> Mlp:
    """He-uniform initialisation: ``W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    dims = [int(v) for v in layer_dims]
    _validate_dims(dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases)


def softplus(x, beta: float = 1.0):
    """Temperatured softplus ``log(1 + exp(beta*x)) / beta``, overflow-safe."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return np.logaddexp(0.0, beta * np.asarray(x, dtype=np.float64)) / beta


def with_smoothed_activations(model: Mlp, beta: float = DEFAULT_BETA) -> Mlp:
    """Analysis view of ``model`` with softplus(beta) hidden units.

    The returned model shares the parameter arrays (read-only), so the
    training model is left untouched.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    view = model.read_only()
    view.activation = "softplus"
    view.beta = float(beta)
    return view


def _as_batch(model: Mlp, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise DimensionMismatchError(f"model expects {model.n_inputs} features, got array of shape {X.shape}")
    return X


def forward_batch(model: Mlp, X) -> np.ndarray:
    X = _as_batch(model, X)
    W, b, act, beta = model._kernel_args()
    return kernels._kernels_py.forward(W, b, act, beta, X)


def forward(model: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("forward expects a single input vector")
    return forward_batch(model, x)[0]


def score_index(logits: np.ndarray, task) -> np.ndarray:
    """Output coordinate that defines the scalar score; argmax ties go to the lowest index."""
    if TaskKind(task) is TaskKind.REGRESSION:
        return np.zeros(logits.shape[0], dtype=np.intp)
    return np.argmax(logits, axis=1).astype(np.intp)


class ModelFunction:
    """Batch derivative interface over an :class:`Mlp` and a task.

    This is the interface the signature code consumes; analytic test
    functions in :mod:`ffca.functions` implement the same four methods.
    """

    def __init__(self, model: Mlp, task=TaskKind.REGRESSION, hessian_cap: int = DEFAULT_HESSIAN_CAP,
                 backend: str | None = None):
        self.model = model
        self.task = check_task(task, model.n_outputs)
        self.hessian_cap = hessian_cap
        self.backend = backend

    @property
    def n_features(self) -> int:
        return self.model.n_inputs

    def _run(self, X, order):
        X = _as_batch(self.model, X)
        if order != kernels.ORDER_GRADIENT and not self.model.smooth:
            raise SmoothingRequiredError(
                "second derivatives of a ReLU network vanish almost everywhere; "
                "use with_smoothed_activations() first"
            )
        if order == kernels.ORDER_FULL and X.shape[1] > self.hessian_cap:
            raise CostGuardError(
                f"full Hessian over {X.shape[1]} features exceeds the cap of {self.hessian_cap}; "
                "raise hessian_cap to override"
            )
        W, b, act, beta = self.model._kernel_args()
        if self.task is TaskKind.REGRESSION:
            idx = np.zeros(X.shape[0], dtype=np.intp)
        else:
            idx = score_index(kernels._kernels_py.forward(W, b, act, beta, X), self.task)
        return kernels.derivatives(W, b, act, beta, X, idx, order, backend=self.backend)

    def score(self, X) -> np.ndarray:
        X = _as_batch(self.model, X)
        out = forward_batch(self.model, X)
        return out[np.arange(len(X)), score_index(out, self.task)]

    def gradients(self, X) -> np.ndarray:
        return self._run(X, kernels.ORDER_GRADIENT)[1]

    def hessian_diagonals(self, X):
        """Returns ``(gradients, diagonals)``, each of shape ``(n, d)``."""
        _, g, h = self._run(X, kernels.ORDER_DIAGONAL)
        return g, h

    def hessians(self, X):
        """Returns ``(gradients, hessians)`` with shapes ``(n, d)`` and ``(n, d, d)``."""
        _, g, h = self._run(X, kernels.ORDER_FULL)
        return g, h


def _single(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("expected a single input vector")
    return x[None, :]


def scalar_score(model: Mlp, x, task=TaskKind.REGRESSION) -> float:
    """Regression output, or the largest logit for classification."""
    return float(ModelFunction(model, task).score(_single(x))[0])


def gradient(model: Mlp, x, task=TaskKind.REGRESSION) -> np.ndarray:
    return ModelFunction(model, task).gradients(_single(x))[0]


def hessian_diagonal(model: Mlp, x, task=TaskKind.REGRESSION) -> np.ndarray:
    return ModelFunction(model, task).hessian_diagonals(_single(x))[1][0]


def hessian_full(model: Mlp, x, task=TaskKind.REGRESSION, hessian_cap: int = DEFAULT_HESSIAN_CAP) -> np.ndarray:
    return ModelFunction(model, task, hessian_cap=hessian_cap).hessians(_single(x))[1][0]


# -- checkpoints -------------------------------------------------------------

def model_to_dict(model: Mlp) -> dict:
    # float repr round-trips exactly through JSON
    return {
        "format": "ffca-mlp",
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "beta": model.beta,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(payload: dict) -> Mlp:
    if payload.get("format") != "ffca-mlp":
        raise ValueError("not an ffca model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    return Mlp(
        payload["layer_dims"],
        [np.array(W, dtype=np.float64).reshape(o, i) for W, o, i in
         zip(payload["weights"], payload["layer_dims"][1:], payload["layer_dims"][:-1])],
        [np.array(b, dtype=np.float64) for b in payload["biases"]],
        payload["activation"],
        payload.get("beta"),
    )


def save_model(model: Mlp, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> Mlp:
    return model_from_dict(json.loads(Path(path).read_text()))
