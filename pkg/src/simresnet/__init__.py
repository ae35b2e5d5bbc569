"""Micro-width residual networks read as Euler discretizations, plus a desk-scale shakedown solver."""

from .core import (
    ActivationKind,
    ContractError,
    DomainError,
    LayerParams,
    Network,
    NumericError,
    SimResNetError,
    activation_deriv,
    activation_eval,
)
from .forward import Trajectory, forward_batch, forward_step, forward_trajectory, refine_layers
from .gradients import (
    ParamGradients,
    backprop_gradients,
    finite_diff_gradients,
    loss,
    relative_error,
)

__version__ = "0.1.0"
