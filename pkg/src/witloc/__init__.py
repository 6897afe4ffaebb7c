"""Synthetic massive-MIMO CSI generation and attention-based localization."""

from .numcore import Tensor, backward, grad_check

__version__ = "0.1.0"

__all__ = ["Tensor", "backward", "grad_check", "__version__"]
