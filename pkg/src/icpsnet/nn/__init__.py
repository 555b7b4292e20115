"""Minimal numpy autodiff: tensors, layer ops, losses, Adam, gradient checking."""

from . import functional
from .gradcheck import grad_check
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor

__all__ = ["Adam", "AdamState", "Tensor", "adam_step", "functional", "grad_check"]
