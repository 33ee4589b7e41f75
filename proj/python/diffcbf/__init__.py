"""Minimum-scaling collision queries, their gradients and CBF safety filtering."""

import json as _json

from ._core import (
    DimensionMismatch,
    Error,
    InfeasibleError,
    Pose,
    Shape,
    SingularKktError,
    UnsupportedError,
    ValidationError,
    grad_alpha,
    gradcheck,
    min_scale,
    quat_rate_matrix,
    scaling,
    solve_qp,
    unicycle_performance,
)
from ._core import simulate as _simulate


def simulate(path):
    """Run a scenario file and return its summary as a dict."""
    return _json.loads(_simulate(str(path)))


__all__ = [
    "DimensionMismatch",
    "Error",
    "InfeasibleError",
    "Pose",
    "Shape",
    "SingularKktError",
    "UnsupportedError",
    "ValidationError",
    "grad_alpha",
    "gradcheck",
    "min_scale",
    "quat_rate_matrix",
    "scaling",
    "simulate",
    "solve_qp",
    "unicycle_performance",
]
