"""Input validation helpers for the estimator API."""
from __future__ import annotations

import numpy as np

from .errors import InputError


def validate_images(X) -> np.ndarray:
    """Coerce X to a float32 (N, H, W, 3) stack with finite values in [0, 1]."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4 or X.shape[-1] != 3:
        raise InputError(
            f"expected images of shape (n_samples, height, width, 3), got {X.shape}"
        )
    if X.shape[0] == 0:
        raise InputError("need at least one image")
    if not np.isfinite(X).all():
        raise InputError("images contain non-finite values")
    if X.min() < -1e-6 or X.max() > 1.0 + 1e-6:
        raise InputError(
            f"image values must lie in [0, 1], got range [{X.min():.4g}, {X.max():.4g}]"
        )
    return np.clip(X, 0.0, 1.0)


def validate_masks(y, images: np.ndarray) -> np.ndarray:
    """Coerce y to uint8 {0,1} masks matching the images' (N, H, W) layout."""
    y = np.asarray(y)
    if y.ndim != 3:
        raise InputError(
            f"expected pixel masks of shape (n_samples, height, width), got {y.shape}"
        )
    if y.shape != images.shape[:3]:
        raise InputError(
            f"mask stack shape {y.shape} does not match image stack shape {images.shape[:3]}"
        )
    if not np.isfinite(y.astype(np.float64)).all():
        raise InputError("masks contain non-finite values")
    return (y > 0).astype(np.uint8)
