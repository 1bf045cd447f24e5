"""Resampling helpers and training-time augmentation.

Intensities are resampled bilinearly, labels and masks with nearest
neighbour (source index ``floor((i + 0.5) * in / out)``), so labels stay binary.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from ..weightmap import WeightMapParams
from .slicing import SliceSample, sample_weight

LIVER_SIZE = 512
LIVER_MAX_SCALE = 600
TUMOR_SIZE = 224
TUMOR_SCALE = 300
TUMOR_MAX_ANGLE = 45.0


def resize(arr: np.ndarray, size: Tuple[int, int], nearest: bool = False) -> np.ndarray:
    """Resize a [C, H, W] array to ``size``."""
    arr = np.asarray(arr)
    if tuple(arr.shape[-2:]) == tuple(size):
        return arr.copy()
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))[None]
    if nearest:
        out = F.interpolate(t, size=size, mode="nearest-exact")
    else:
        out = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
    return out[0].numpy().astype(arr.dtype, copy=False)


def scale_crop(arr, scaled: int, top: int, left: int, size: int, nearest=False):
    out = resize(arr, (scaled, scaled), nearest)
    return out[:, top:top + size, left:left + size]


def rotate(arr, angle: float, nearest=False):
    return ndimage.rotate(arr, angle, axes=(1, 2), reshape=False, order=0 if nearest else 1,
                          mode="constant", cval=0.0)


def _rebuild(sample: SliceSample, image, label, roi, params, **meta) -> SliceSample:
    label = (label > 0.5).astype(np.uint8)
    roi = None if roi is None else (roi > 0.5).astype(np.uint8)
    return replace(
        sample, image=image.astype(np.float32), label=label, roi=roi,
        weight=sample_weight(label, roi, params), meta={**sample.meta, **meta},
    )


def augment_liver(sample: SliceSample, rng: np.random.Generator,
                  weight_params: Optional[WeightMapParams] = None,
                  max_scale: Optional[int] = None) -> SliceSample:
    """Scale to a x a (a uniform in [S, S*600/512]) then random S x S crop.

    S is the sample's own size (512 for full CT slices). The weight map is
    recomputed from the transformed label.
    """
    size = sample.image.shape[-1]
    hi = max_scale or int(round(size * LIVER_MAX_SCALE / LIVER_SIZE))
    a = int(rng.integers(size, hi + 1))
    top, left = (int(v) for v in rng.integers(0, a - size + 1, size=2))
    tf = lambda x, nn_: None if x is None else scale_crop(x, a, top, left, size, nn_)
    return _rebuild(sample, tf(sample.image, False), tf(sample.label, True), tf(sample.roi, True),
                    weight_params, scale=a, offset=(top, left))


def augment_tumor(sample: SliceSample, rng: np.random.Generator,
                  weight_params: Optional[WeightMapParams] = None,
                  max_angle: float = TUMOR_MAX_ANGLE) -> SliceSample:
    """Scale to 300/224 of the size, random crop back, random rotation in [-45, 45] degrees."""
    size = sample.image.shape[-1]
    scaled = int(round(size * TUMOR_SCALE / TUMOR_SIZE))
    top, left = (int(v) for v in rng.integers(0, scaled - size + 1, size=2))
    angle = float(rng.uniform(-max_angle, max_angle))

    def tf(x, nn_):
        if x is None:
            return None
        return rotate(scale_crop(x, scaled, top, left, size, nn_), angle, nn_)

    return _rebuild(sample, tf(sample.image, False), tf(sample.label, True), tf(sample.roi, True),
                    weight_params, scale=scaled, offset=(top, left), angle=angle)
