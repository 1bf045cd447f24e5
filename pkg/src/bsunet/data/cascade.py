"""Liver-crop preprocessing for the tumor stage and its inverse."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import BSUNetError, ShapeError
from .slicing import SliceSample, foreground_mask, sample_weight, slice_volume
from .transforms import TUMOR_SIZE, resize

MARGIN = 10


class SkipSlice(BSUNetError):
    """The slice has no liver and takes no part in the tumor stage."""


@dataclass(frozen=True)
class CascadeGeometry:
    slice_index: int
    full_shape: Tuple[int, int]
    top: int
    left: int
    height: int
    width: int
    pad_top: int
    pad_left: int
    side: int
    size: int = TUMOR_SIZE

    @property
    def scale(self) -> float:
        return self.size / self.side

    def to_array(self) -> np.ndarray:
        d = asdict(self)
        return np.array([d["slice_index"], *d["full_shape"], self.top, self.left, self.height,
                         self.width, self.pad_top, self.pad_left, self.side, self.size], dtype=np.int64)

    @classmethod
    def from_array(cls, a) -> "CascadeGeometry":
        a = [int(v) for v in a]
        return cls(a[0], (a[1], a[2]), *a[3:])


def liver_crop_box(mask: np.ndarray, margin: int = MARGIN) -> Tuple[int, int, int, int]:
    """(top, left, height, width) of the mask's bounding box grown by ``margin``, clamped."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise SkipSlice("empty liver mask")
    h, w = mask.shape
    top, bottom = max(rows[0] - margin, 0), min(rows[-1] + margin, h - 1)
    left, right = max(cols[0] - margin, 0), min(cols[-1] + margin, w - 1)
    return int(top), int(left), int(bottom - top + 1), int(right - left + 1)


def _forward(arr: np.ndarray, g: CascadeGeometry, nearest: bool) -> np.ndarray:
    crop = arr[:, g.top:g.top + g.height, g.left:g.left + g.width]
    square = np.zeros((arr.shape[0], g.side, g.side), dtype=arr.dtype)
    square[:, g.pad_top:g.pad_top + g.height, g.pad_left:g.pad_left + g.width] = crop
    return resize(square, (g.size, g.size), nearest=nearest)


def cascade_preprocess(image: np.ndarray, liver_mask: np.ndarray, size: int = TUMOR_SIZE,
                       margin: int = MARGIN, slice_index: int = -1):
    """Mask out non-liver pixels, crop around the liver, pad to a square, rescale.

    ``image`` is [C, H, W] (or [H, W]); ``liver_mask`` is [H, W]. Padding is
    centred with the odd pixel going to the bottom/right.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[None]
    mask = np.asarray(liver_mask).astype(bool)
    if mask.shape != image.shape[1:]:
        raise ShapeError(f"mask {mask.shape} does not match image {image.shape}")
    top, left, h, w = liver_crop_box(mask, margin)
    side = max(h, w)
    g = CascadeGeometry(slice_index, mask.shape, top, left, h, w, (side - h) // 2, (side - w) // 2,
                        side, size)
    return _forward(image * mask, g, nearest=False), g


def cascade_apply(mask: np.ndarray, geometry: CascadeGeometry) -> np.ndarray:
    """Apply a recorded geometry to a label/mask [H, W] (nearest neighbour)."""
    return _forward(np.asarray(mask)[None], geometry, nearest=True)[0]


def cascade_invert(pred: np.ndarray, geometry: CascadeGeometry) -> np.ndarray:
    """Map a size x size prediction back onto the full slice grid (zeros elsewhere)."""
    pred = np.asarray(pred)
    if pred.shape != (geometry.size, geometry.size):
        raise ShapeError(f"prediction {pred.shape} does not match geometry size {geometry.size}")
    g = geometry
    square = resize(pred[None], (g.side, g.side), nearest=True)[0]
    out = np.zeros(g.full_shape, dtype=pred.dtype)
    out[g.top:g.top + g.height, g.left:g.left + g.width] = \
        square[g.pad_top:g.pad_top + g.height, g.pad_left:g.pad_left + g.width]
    return out


def make_tumor_samples(volume255: np.ndarray, labels: np.ndarray, channels: int = 1,
                       size: int = TUMOR_SIZE, weight_params=None, volume_id: str = "volume",
                       liver: Optional[np.ndarray] = None):
    """Tumor-stage samples from every slice containing liver.

    ``liver`` overrides the liver masks (e.g. predicted ones); by default the
    ground-truth label >= 1 is used.
    """
    liver = foreground_mask(labels, "liver") if liver is None else np.asarray(liver)
    tumor = foreground_mask(labels, "tumor")
    samples = []
    for k, img in slice_volume(volume255, channels):
        try:
            crop, g = cascade_preprocess(img / 255.0, liver[:, :, k], size=size, slice_index=k)
        except SkipSlice:
            continue
        lab = cascade_apply(tumor[:, :, k], g)[None]
        samples.append(SliceSample(crop.astype(np.float32), lab, sample_weight(lab, None, weight_params),
                                   (volume_id, k), geometry=g))
    return samples
