"""Activation benchmarking on a from-scratch numpy CNN stack (ReLU, PReLU, Mish, GCU)."""
__version__ = "0.1.0"

from .activations import Activation, act_derivative, act_forward, gcu_zeros, prelu_param_grad
from .autodiff import Tape, grad_check
from .nn import build_alexnet, forward, softmax_xent, accuracy

__all__ = [
    "Activation", "act_forward", "act_derivative", "prelu_param_grad", "gcu_zeros",
    "Tape", "grad_check", "build_alexnet", "forward", "softmax_xent", "accuracy",
]
