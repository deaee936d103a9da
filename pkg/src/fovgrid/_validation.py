"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np

__all__ = ["check_image_batch", "check_signal_batch"]


def check_image_batch(X) -> np.ndarray:
    """Coerce to a float (n_samples, H, W, C) batch.

    Accepts a single (H, W) / (H, W, C) image or a batch with or without
    a channel axis.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None, :, :, None]
    elif X.ndim == 3:
        # ambiguous: (N, H, W) batch vs single (H, W, C); treat a trailing
        # axis of size <= 4 as channels
        X = X[None, :, :, :] if X.shape[-1] <= 4 else X[:, :, :, None]
    elif X.ndim != 4:
        raise ValueError(f"expected 2-4 dims, got shape {X.shape}")
    if X.shape[1] < 2 or X.shape[2] < 2:
        raise ValueError("images must be at least 2x2")
    if not np.isfinite(X).all():
        raise ValueError("images must be finite")
    return X


def check_signal_batch(X, n_points: int, n_channels: int) -> np.ndarray:
    """Coerce to (n_samples, n_points, channels), accepting the flattened
    2D form produced by transform()."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != n_points * n_channels:
            raise ValueError(
                f"expected {n_points * n_channels} features, got {X.shape[1]}")
        X = X.reshape(X.shape[0], n_points, n_channels)
    elif X.ndim == 3:
        if X.shape[1] != n_points or X.shape[2] != n_channels:
            raise ValueError(
                f"expected (*, {n_points}, {n_channels}), got {X.shape}")
    else:
        raise ValueError(f"expected 2 or 3 dims, got shape {X.shape}")
    return X
