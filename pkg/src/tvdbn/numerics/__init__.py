"""Double-precision numerical core: autodiff tensors, expm, gradient checks."""

from .gradcheck import GradReport, grad_check
from .linalg import expm, trace_expm
from .optim import Adam
from .tensor import Tensor, concat, glorot_uniform, no_grad, stack

__all__ = [
    "Adam",
    "GradReport",
    "Tensor",
    "concat",
    "expm",
    "glorot_uniform",
    "grad_check",
    "no_grad",
    "stack",
    "trace_expm",
]
