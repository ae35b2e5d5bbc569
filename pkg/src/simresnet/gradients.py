"""Squared-error loss and parameter gradients of the Euler-stepped network.

The analytic gradient is the exact discrete adjoint of the residual
recursion, identity path included. ``finite_diff_gradients`` is an
independent central-difference oracle used to verify it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, Network, NumericError, activation_deriv, activation_eval
from .forward import forward_trajectory


@dataclass(frozen=True)
class ParamGradients:
    """Gradients aligned with ``Network.layers``: (L, N, N) weights and (L, N) biases."""

    weights: np.ndarray
    biases: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.biases.ravel()])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.flat())))


def loss(output, target) -> float:
    out = np.asarray(output, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if out.shape != tgt.shape:
        raise ContractError(f"output shape {out.shape} != target shape {tgt.shape}")
    return float(np.sum((out - tgt) ** 2))


def backprop_gradients(net: Network, x0, target) -> ParamGradients:
    """Exact gradient of ``loss(x(T), target)`` by reverse accumulation.

    With z_k = W_k x_k / N + b_k and D_k = diag(sigma'(z_k)) the adjoint runs
    lam_L = 2 (x_L - h) and lam_k = lam_{k+1} + (dt/N) W_k^T D_k lam_{k+1};
    the layer gradients are dt D_k lam_{k+1} for the bias and its outer
    product with x_k / N for the weight.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (net.width,):
        raise ContractError(f"target has shape {target.shape}, network width is {net.width}")
    states = forward_trajectory(x0, net).states
    if not np.all(np.isfinite(states)):
        raise NumericError("non-finite state in forward pass")

    n = net.width
    grad_w = np.empty((net.depth, n, n))
    grad_b = np.empty((net.depth, n))
    lam = 2.0 * (states[-1] - target)
    for k in range(net.depth - 1, -1, -1):
        layer = net.layers[k]
        x = states[k]
        pre = layer.weight @ x / n + layer.bias
        g = net.dt * activation_deriv(net.activation, pre) * lam
        grad_b[k] = g
        grad_w[k] = np.outer(g, x) / n
        lam = lam + layer.weight.T @ g / n
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise NumericError("non-finite gradient")
    return ParamGradients(grad_w, grad_b)


def _loss_of_arrays(weights, biases, x0, target, net: Network) -> float:
    x = np.asarray(x0, dtype=float)
    n = net.width
    for w, b in zip(weights, biases):
        x = x + net.dt * activation_eval(net.activation, w @ x / n + b)
    return loss(x, target)


def finite_diff_gradients(net: Network, x0, target, eps: float = 1e-6) -> ParamGradients:
    """Central differences ``(J(p + eps) - J(p - eps)) / (2 eps)`` for every scalar parameter."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    weights, biases = net.stacked()
    target = np.asarray(target, dtype=float)
    grads = []
    for arr in (weights, biases):
        g = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            saved = arr[idx]
            arr[idx] = saved + eps
            up = _loss_of_arrays(weights, biases, x0, target, net)
            arr[idx] = saved - eps
            down = _loss_of_arrays(weights, biases, x0, target, net)
            arr[idx] = saved
            g[idx] = (up - down) / (2.0 * eps)
        grads.append(g)
    return ParamGradients(*grads)


def relative_error(analytic: ParamGradients, numeric: ParamGradients, floor: float = 1e-4) -> float:
    """Largest entrywise ``|a - f| / max(|a|, |f|, floor)``.

    The floor keeps parameters with vanishing gradients from turning
    finite-difference roundoff (about 1e-10 at eps = 1e-6) into large ratios.
    """
    a = analytic.flat()
    f = numeric.flat()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
    diff = np.abs(a - f)
    # 0/0 only occurs for floor = 0 with both entries zero, which is agreement
    ratio = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(np.max(ratio))
