"""Hierarchical planner-controller agent for 2D maze navigation."""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
