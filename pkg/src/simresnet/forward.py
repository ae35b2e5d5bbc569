"""Forward map of the residual network as explicit Euler steps in layer-time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ActivationKind, ContractError, LayerParams, Network, activation_eval


@dataclass(frozen=True)
class Trajectory:
    """States x(t_0), ..., x(t_L) of one measurement, stacked as an (L+1, N) array."""

    states: np.ndarray

    @property
    def output(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return len(self.states)


def forward_step(state, layer: LayerParams, dt: float, kind: ActivationKind, width: int):
    """One Euler step ``x + dt * sigma(W x / width + b)``.

    ``state`` may also be an (M, N) batch of measurements, one per row.
    """
    x = np.asarray(state, dtype=float)
    if x.shape[-1] != layer.dim:
        raise ContractError(f"state has length {x.shape[-1]}, layer expects {layer.dim}")
    if dt < 0:
        raise ContractError(f"dt must be non-negative, got {dt}")
    pre = x @ layer.weight.T / width + layer.bias
    return x + dt * activation_eval(kind, pre)


def forward_trajectory(x0, net: Network) -> Trajectory:
    x = np.asarray(x0, dtype=float)
    if x.shape != (net.width,):
        raise ContractError(f"input has shape {x.shape}, network width is {net.width}")
    states = [x]
    for layer in net.layers:
        x = forward_step(x, layer, net.dt, net.activation, net.width)
        states.append(x)
    return Trajectory(np.stack(states))


def forward_batch(inputs, net: Network) -> np.ndarray:
    """Network outputs x(T) for an (M, N) array of already lifted inputs."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.width:
        raise ContractError(f"inputs must have shape (M, {net.width}), got {x.shape}")
    for layer in net.layers:
        x = forward_step(x, layer, net.dt, net.activation, net.width)
    return x


def lift_inputs(features, multiplier: int) -> np.ndarray:
    """Copy each feature column ``multiplier`` times: [a, b] -> [a, a, b, b]."""
    if multiplier < 1:
        raise ContractError("width multiplier must be >= 1")
    return np.repeat(np.asarray(features, dtype=float), multiplier, axis=-1)


def refine_layers(net: Network, factor: int) -> Network:
    """Repeat every layer ``factor`` times with step ``dt / factor``.

    Parameters stay piecewise constant in layer-time, so the refined network
    discretizes the same continuous-time model on a finer grid.
    """
    if int(factor) != factor or factor < 1:
        raise ContractError(f"refinement factor must be a positive integer, got {factor}")
    layers = tuple(layer for layer in net.layers for _ in range(int(factor)))
    return Network(layers, net.dt / factor, net.activation, net.feature_dim)
