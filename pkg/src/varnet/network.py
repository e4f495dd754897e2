"""Dense feed-forward models used as the trial function."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad

MODEL_FORMAT = "varnet-model-v1"

ACTIVATIONS = {
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "relu": ad.relu,
    "sin": ad.sin,
    "identity": lambda x: x,
}


class InvalidDims(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (units_out, units_in)
    biases: np.ndarray  # (units_out,)
    activation: str = "sigmoid"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeMismatch(f"weights {self.weights.shape} and biases {self.biases.shape} do not match")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")

    @property
    def units_in(self):
        return self.weights.shape[1]

    @property
    def units_out(self):
        return self.weights.shape[0]


class Model:
    """Stack of dense layers mapping (N, n) inputs to (N, m) outputs.

    Anything exposing ``parameters()``, ``input_dim``, ``output_dim`` and
    ``__call__(x, params)`` can stand in for a ``Model`` during training.
    """

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise InvalidDims("a model needs at least one layer")
        for prev, layer in zip(layers, layers[1:]):
            if layer.units_in != prev.units_out:
                raise ShapeMismatch(f"layer expects {layer.units_in} inputs but receives {prev.units_out}")
        self.layers = layers

    @property
    def input_dim(self):
        return self.layers[0].units_in

    @property
    def output_dim(self):
        return self.layers[-1].units_out

    @property
    def dims(self):
        return [self.input_dim] + [layer.units_out for layer in self.layers]

    @property
    def activations(self):
        return [layer.activation for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Live parameter arrays, layer-major: weights then biases."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def flat_parameters(self) -> np.ndarray:
        """Copy of all parameters as one vector (weights row-major, then biases)."""
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat_parameters(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.num_parameters,):
            raise ShapeMismatch(f"expected {self.num_parameters} parameters, got {flat.shape}")
        start = 0
        for p in self.parameters():
            p[...] = flat[start : start + p.size].reshape(p.shape)
            start += p.size

    def copy(self) -> "Model":
        return Model([DenseLayer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])

    def __call__(self, x, params=None):
        """Forward pass; ``x`` may be an array, a ``Var`` or a ``Jet``.

        ``params`` are tape-bound parameters in ``parameters()`` order; when
        omitted the raw arrays are used and nothing is recorded.
        """
        if params is None:
            params = self.parameters()
        width = np.shape(ad.value_of(x))[-1]
        if width != self.input_dim:
            raise ShapeMismatch(f"model takes {self.input_dim} inputs, got {width}")
        h = x
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            h = ad.add(ad.matmul(h, ad.transpose(w)), b)
            h = ACTIVATIONS[layer.activation](h)
        return h

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "dims": self.dims,
            "activations": self.activations,
            "layers": [{"weights": l.weights.tolist(), "biases": l.biases.tolist()} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Model":
        if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"not a {MODEL_FORMAT} document")
        try:
            dims, acts, raw = data["dims"], data["activations"], data["layers"]
            if len(acts) != len(raw) or len(dims) != len(raw) + 1:
                raise ModelFormatError("dims, activations and layers disagree in length")
            layers = [DenseLayer(np.array(l["weights"], dtype=np.float64), np.array(l["biases"], dtype=np.float64), a)
                      for l, a in zip(raw, acts)]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(str(exc)) from exc
        model = cls(layers)
        if model.dims != list(dims):
            raise ModelFormatError(f"declared dims {dims} do not match layer shapes {model.dims}")
        if not all(np.all(np.isfinite(p)) for p in model.parameters()):
            raise ModelFormatError("non-finite parameter values")
        return model

    def dumps(self) -> str:
        # json writes floats with repr, the shortest round-tripping form
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "Model":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path):
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path) -> "Model":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build(dims, activation="sigmoid", final_activation="identity", seed=0) -> Model:
    """Glorot-uniform weights, zero biases."""
    dims = list(dims)
    if len(dims) < 2 or any(int(d) != d or d < 1 for d in dims):
        raise InvalidDims(f"dims must list at least two positive sizes, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = final_activation if i == len(dims) - 2 else activation
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Model(layers)


def parameter_count(dims) -> int:
    return sum(a * b + b for a, b in zip(dims, dims[1:]))


def forward(model, x, tape=None):
    """Forward pass recorded on ``tape`` (a fresh one if omitted)."""
    tape = tape if tape is not None else ad.Tape()
    return model(np.asarray(x, dtype=np.float64), tape.watch(model.parameters()))


def parameters(model) -> np.ndarray:
    return model.flat_parameters()


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
