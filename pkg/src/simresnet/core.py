"""Activation functions, parameter containers and the package exceptions."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit


class SimResNetError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SimResNetError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ContractError(SimResNetError, ValueError):
    """Arguments violate a precondition (shape mismatch, empty input, ...)."""


class NumericError(SimResNetError, ArithmeticError):
    """A computation produced non-finite intermediates."""


class ActivationKind(str, enum.Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"

    @classmethod
    def parse(cls, value: "str | ActivationKind") -> "ActivationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown activation {value!r}") from None

    @property
    def code(self) -> int:
        # integer tag used by the compiled training kernel
        return 0 if self is ActivationKind.SIGMOID else 1


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("activation argument must be finite")
    return x


def _unbox(x, out):
    return float(out) if np.ndim(x) == 0 else out


def activation_eval(kind: ActivationKind, x):
    """Evaluate the activation elementwise; scalars in, scalars out."""
    kind = ActivationKind.parse(kind)
    arr = _check_finite(x)
    if kind is ActivationKind.SIGMOID:
        out = expit(arr)
    else:
        out = np.maximum(arr, 0.0)
    return _unbox(x, out)


def activation_deriv(kind: ActivationKind, x):
    """Derivative of the activation. The ReLU derivative at exactly 0 is 0."""
    kind = ActivationKind.parse(kind)
    arr = _check_finite(x)
    if kind is ActivationKind.SIGMOID:
        s = expit(arr)
        out = s * (1.0 - s)
    else:
        out = (arr > 0.0).astype(float)
    return _unbox(x, out)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LayerParams:
    """Weight matrix and bias vector of one layer (one Euler step)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weight)
        b = _frozen(self.bias)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ContractError(f"weight must be square, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ContractError(
                f"bias shape {b.shape} does not match weight dimension {w.shape[0]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ContractError("layer parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LayerParams):
            return NotImplemented
        return np.array_equal(self.weight, other.weight) and np.array_equal(
            self.bias, other.bias
        )


@dataclass(frozen=True, eq=False)
class Network:
    """A stack of residual layers read as explicit Euler steps of size ``dt``.

    ``width`` (N) is the number of neurons per layer and ``feature_dim`` (d)
    the number of input features; N = d is the micro-width case, N = m*d is
    used for the wide comparison models whose inputs are lifted by
    replication.
    """

    layers: tuple
    dt: float
    activation: ActivationKind
    feature_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ContractError("a network needs at least one layer")
        widths = {layer.dim for layer in layers}
        if len(widths) != 1:
            raise ContractError(f"all layers must share one width, got {sorted(widths)}")
        dt = float(self.dt)
        if not (np.isfinite(dt) and dt > 0):
            raise ContractError(f"dt must be positive, got {self.dt}")
        d = int(self.feature_dim)
        n = layers[0].dim
        if d < 1 or n % d != 0:
            raise ContractError(f"width {n} is not a positive multiple of feature_dim {d}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))
        object.__setattr__(self, "feature_dim", d)

    @property
    def width(self) -> int:
        return self.layers[0].dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def horizon(self) -> float:
        """Output time T = L * dt."""
        return self.depth * self.dt

    @property
    def width_multiplier(self) -> int:
        return self.width // self.feature_dim

    @property
    def n_params(self) -> int:
        return self.depth * (self.width**2 + self.width)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Parameters as writable arrays of shape (L, N, N) and (L, N)."""
        w = np.stack([layer.weight for layer in self.layers])
        b = np.stack([layer.bias for layer in self.layers])
        return w, b

    @classmethod
    def from_arrays(cls, weights, biases, dt, activation, feature_dim) -> "Network":
        layers = tuple(LayerParams(w, b) for w, b in zip(weights, biases))
        if len(layers) != len(weights) or len(weights) != len(biases):
            raise ContractError("weights and biases must have the same depth")
        return cls(layers, dt, activation, feature_dim)

    def with_arrays(self, weights, biases) -> "Network":
        return Network.from_arrays(weights, biases, self.dt, self.activation, self.feature_dim)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.activation is other.activation
            and self.feature_dim == other.feature_dim
            and self.layers == other.layers
        )


def zero_network(
    depth: int,
    width: int,
    feature_dim: int | None = None,
    activation: ActivationKind = ActivationKind.SIGMOID,
    horizon: float = 1.0,
) -> Network:
    """All-zero parameters with dt = horizon / depth."""
    w = np.zeros((depth, width, width))
    b = np.zeros((depth, width))
    return Network.from_arrays(w, b, horizon / depth, activation, feature_dim or width)


def average_networks(nets: Sequence[Network]) -> Network:
    """Arithmetic mean of every weight and bias across structurally equal networks."""
    if not nets:
        raise ContractError("cannot average an empty list of networks")
    first = nets[0]
    for net in nets[1:]:
        if (net.depth, net.width, net.dt, net.activation, net.feature_dim) != (
            first.depth,
            first.width,
            first.dt,
            first.activation,
            first.feature_dim,
        ):
            raise ContractError("networks to average must share structure")
    ws, bs = zip(*(net.stacked() for net in nets))
    return first.with_arrays(np.mean(ws, axis=0), np.mean(bs, axis=0))
