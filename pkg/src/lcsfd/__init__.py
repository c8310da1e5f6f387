"""Least-costly space-filling input design for nonlinear system identification."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
