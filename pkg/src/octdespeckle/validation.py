"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np

from .exceptions import ArgumentError
from .volume import ContrastWindow, Domain, Volume


def as_volume_array(X, name: str = "X", domain: Domain | None = None) -> np.ndarray:
    """Validate a 3-D volume input given as a Volume or an array.

    Returns the underlying float array (no copy where possible).
    """
    if isinstance(X, Volume):
        if domain is not None and X.domain != domain:
            raise ArgumentError(
                f"{name} must be in the {domain.name} domain, got {X.domain.name}")
        return X.data
    arr = np.asarray(X)
    if arr.ndim != 3:
        raise ArgumentError(f"{name} must be a 3-D (nz, nx, ny) volume, got {arr.ndim}-D")
    if arr.size == 0:
        raise ArgumentError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise ArgumentError(f"{name} holds NaN or infinite samples")
    return arr


def rewrap_like(X, data: np.ndarray, domain: Domain | None = None):
    """Return `data` as a Volume when X was one, else as a plain array."""
    if isinstance(X, Volume):
        return Volume(data, X.pitch, X.domain if domain is None else domain)
    return data


def as_window(window) -> ContrastWindow:
    """Coerce a ContrastWindow or a (lower_db, upper_db) pair."""
    if isinstance(window, ContrastWindow):
        return window
    try:
        lower, upper = window
    except (TypeError, ValueError):
        raise ArgumentError(
            f"expected a ContrastWindow or a (lower_db, upper_db) pair, got {window!r}"
        ) from None
    return ContrastWindow(float(lower), float(upper))
