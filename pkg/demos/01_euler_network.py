"""A residual network read as explicit Euler steps, and its exact gradient."""

import numpy as np

from simresnet import (
    Network,
    backprop_gradients,
    finite_diff_gradients,
    forward_trajectory,
    relative_error,
)
from simresnet.forward import refine_layers
from simresnet.trainer import TrainConfig, init_network

# Two layers, one neuron, dt = 0.5: every layer adds dt * sigmoid(w x + b).
w = np.ones((2, 1, 1))
b = np.full((2, 1), 0.5)
net = Network.from_arrays(w, b, 0.5, "sigmoid", 1)
traj = forward_trajectory([0.0], net)
print("states x(t_k):", traj.states.ravel())

# Each sigmoid step moves the state by less than dt.
print("increments:", np.diff(traj.states.ravel()), "dt =", net.dt)

# Refining layer-time (same parameters, smaller steps) converges at first order.
net = init_network(2, TrainConfig(depth=4, seed=3))
x0 = np.array([0.2, 0.6])
y = [forward_trajectory(x0, refine_layers(net, f)).output for f in (1, 2, 4, 8)]
for f, (a, c) in zip((1, 2, 4), zip(y, y[1:])):
    print(f"refine x{f} -> x{2 * f}: change {np.linalg.norm(a - c):.3e}")

# The adjoint gradient against central differences.
target = np.array([0.9, 0.9])
g = backprop_gradients(net, x0, target)
fd = finite_diff_gradients(net, x0, target, eps=1e-6)
print("bias gradients, layer 0:", g.biases[0])
print("max relative error vs finite differences:", relative_error(g, fd))
