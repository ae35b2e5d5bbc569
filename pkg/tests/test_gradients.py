import numpy as np
import pytest

from simresnet.core import ActivationKind, ContractError, Network, zero_network
from simresnet.forward import forward_trajectory
from simresnet.gradients import (
    ParamGradients,
    backprop_gradients,
    finite_diff_gradients,
    loss,
    relative_error,
)
from simresnet.trainer import TrainConfig, init_network


@pytest.mark.parametrize(
    "out, tgt, expected",
    [([0.5], [0.5], 0.0), ([1.0, 0.0], [0.0, 1.0], 2.0), ([0.3], [0.8], 0.25)],
)
def test_loss_examples(out, tgt, expected):
    assert loss(out, tgt) == pytest.approx(expected, abs=1e-15)


def test_loss_shape_mismatch():
    with pytest.raises(ContractError):
        loss([0.1, 0.2], [0.1])


def test_hand_case_single_layer():
    net = zero_network(1, 1)
    g = backprop_gradients(net, [0.0], [0.0])
    # output 0.5, dloss/db = 2 * 0.5 * sigma'(0) = 0.25, dloss/dw = 0 because x0 = 0
    assert g.biases[0, 0] == 0.25
    assert g.weights[0, 0, 0] == 0.0


def test_zero_gradient_at_exact_fit():
    net = init_network(2, TrainConfig(depth=3, seed=4))
    x0 = np.array([0.2, 0.7])
    target = forward_trajectory(x0, net).output
    g = backprop_gradients(net, x0, target)
    assert g.max_abs() == 0.0
    fd = finite_diff_gradients(net, x0, target)
    assert fd.max_abs() < 1e-9


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("depth", [2, 4, 8])
def test_backprop_matches_finite_differences(d, depth):
    rng = np.random.default_rng(100 * d + depth)
    for seed in range(4):
        net = init_network(d, TrainConfig(depth=depth, seed=seed))
        x0 = rng.uniform(size=d)
        h = np.full(d, rng.uniform())
        err = relative_error(backprop_gradients(net, x0, h), finite_diff_gradients(net, x0, h))
        # entries below the 1e-4 floor carry central-difference roundoff near 1e-10
        assert err < 1e-5


def test_relu_and_wide_network_gradients():
    rng = np.random.default_rng(8)
    w, b = rng.uniform(-0.5, 0.5, (3, 4, 4)), rng.uniform(0.1, 0.5, (3, 4))
    net = Network.from_arrays(w, b, 1 / 3, ActivationKind.RELU, 2)
    x0 = np.repeat(rng.uniform(size=2), 2)
    h = np.full(4, 0.9)
    err = relative_error(backprop_gradients(net, x0, h), finite_diff_gradients(net, x0, h))
    assert err < 1e-6


def test_finite_differences_converge_quadratically():
    net = init_network(2, TrainConfig(depth=4, seed=9))
    x0, h = np.array([0.3, 0.6]), np.array([0.9, 0.9])
    exact = backprop_gradients(net, x0, h).flat()
    errs = [np.max(np.abs(finite_diff_gradients(net, x0, h, eps).flat() - exact)) for eps in (1e-2, 5e-3)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_relative_error_floor():
    a = ParamGradients(np.zeros((1, 1, 1)), np.array([[1e-12]]))
    f = ParamGradients(np.zeros((1, 1, 1)), np.array([[2e-12]]))
    assert relative_error(a, f) == pytest.approx(1e-8)
    assert relative_error(a, f, floor=0.0) == pytest.approx(0.5)


def test_target_shape_checked():
    with pytest.raises(ContractError):
        backprop_gradients(zero_network(1, 2), [0.0, 0.0], [0.0])
