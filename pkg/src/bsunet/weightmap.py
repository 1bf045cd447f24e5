"""Contour distance maps and normalized boundary weight maps.

``A = (w * F + 1) * exp(-D / (2 sigma^2))`` followed by min-max normalization
to [0, 1]. ``D`` is the Euclidean distance (pixels) to the nearest contour
pixel. The exponent is linear in ``D`` by default; ``exponent="squared"``
switches to the Gaussian form ``-D^2 / (2 sigma^2)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DegenerateMaskError, ShapeError

log = logging.getLogger(__name__)

LIVER_W = 0.05
LIVER_SIGMA = 20.0

_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass
class WeightMapParams:
    w: float = LIVER_W
    sigma: float = LIVER_SIGMA
    roi: Optional[np.ndarray] = None  # F; None means all zeros
    exponent: str = "linear"

    def __post_init__(self):
        if self.w < 0:
            raise ConfigurationError(f"w must be >= 0, got {self.w}")
        if self.sigma <= 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if self.exponent not in ("linear", "squared"):
            raise ConfigurationError(f"exponent must be 'linear' or 'squared', got {self.exponent!r}")
        if self.roi is not None:
            roi = np.asarray(self.roi)
            if not np.isin(roi, (0, 1)).all():
                raise ConfigurationError("ROI matrix F must be binary")
            self.roi = roi.astype(np.float64)


def contour_mask(label: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one 4-connected background neighbour.

    Pixels outside the image are not background, so a mask touching the image
    edge has no contour along that edge.
    """
    fg = np.asarray(label).astype(bool)
    if fg.ndim != 2:
        raise ShapeError(f"label must be 2D, got shape {fg.shape}")
    return fg & ~ndimage.binary_erosion(fg, structure=_CROSS, border_value=1)


def contour_distance_map(label: np.ndarray) -> np.ndarray:
    label = np.asarray(label)
    if label.ndim != 2:
        raise ShapeError(f"label must be 2D, got shape {label.shape}")
    if not np.isin(label, (0, 1)).all():
        raise ConfigurationError("label must be binary")
    fg = label.astype(bool)
    if fg.all() or not fg.any():
        raise DegenerateMaskError("label needs both foreground and background pixels")
    return ndimage.distance_transform_edt(~contour_mask(fg))


def unnormalized_weight(D: np.ndarray, params: WeightMapParams) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    F = np.zeros_like(D) if params.roi is None else params.roi
    if F.shape != D.shape:
        raise ShapeError(f"ROI shape {F.shape} does not match distance map {D.shape}")
    dist = D if params.exponent == "linear" else D ** 2
    return (params.w * F + 1.0) * np.exp(-dist / (2.0 * params.sigma ** 2))


def weight_map(D: np.ndarray, params: WeightMapParams) -> np.ndarray:
    A = unnormalized_weight(D, params)
    lo, hi = A.min(), A.max()
    if hi == lo:
        log.warning("constant weight map before normalization; using all-ones weights")
        return np.ones_like(A)
    return (A - lo) / (hi - lo)


def compute_weight_map(label: np.ndarray, params: Optional[WeightMapParams] = None) -> np.ndarray:
    """Weight map for a label map; uniform ones when the label is empty or full."""
    params = params or WeightMapParams()
    try:
        D = contour_distance_map(label)
    except DegenerateMaskError:
        return np.ones(np.shape(label), dtype=np.float64)
    return weight_map(D, params)


def to_preview(W: np.ndarray) -> np.ndarray:
    """8-bit rendering of a weight map (scaled by 255)."""
    return np.clip(np.rint(np.asarray(W) * 255.0), 0, 255).astype(np.uint8)
