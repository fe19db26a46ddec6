"""Flat parameter-vector algebra.

A parameter vector is a read-only 1-D ``float64`` numpy array. Every
strategy and learner in the package trades in these.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, UsageError

ParameterVector = np.ndarray


def as_params(values) -> ParameterVector:
    """Validate ``values`` and return them as an immutable float64 vector.

    Raises:
        UsageError: if the input is empty or not one-dimensional.
        ValueError: if any entry is NaN or infinite.
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise UsageError(f"parameter vector must be 1-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def _check_dims(*vectors: np.ndarray) -> None:
    dim = vectors[0].shape
    for v in vectors[1:]:
        if v.shape != dim:
            raise DimensionError(f"dimension mismatch: {dim} vs {v.shape}")


def weighted_sum(vectors: Sequence[ParameterVector], weights: Sequence[float]) -> ParameterVector:
    """Elementwise sum of ``w_i * v_i``. Weights are used as given, not renormalized."""
    if len(vectors) == 0:
        raise UsageError("weighted_sum needs at least one vector")
    if len(vectors) != len(weights):
        raise UsageError(f"{len(vectors)} vectors but {len(weights)} weights")
    vs = [np.asarray(v, dtype=np.float64) for v in vectors]
    _check_dims(*vs)
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise UsageError("weights must be finite")
    # Accumulate in list order so results do not depend on BLAS reduction order.
    out = np.zeros_like(vs[0])
    for wi, vi in zip(w, vs):
        out += wi * vi
    return as_params(out)


def l2_dist_sq(a: ParameterVector, b: ParameterVector) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(a, b)
    d = a - b
    return float(np.dot(d, d))


def axpy(a: ParameterVector, scale: float, b: ParameterVector) -> ParameterVector:
    """Return ``a + scale * b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(a, b)
    return as_params(a + scale * b)
