"""Decomposition of volumes into 1-channel or 3-channel 2D training samples."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, ShapeError
from ..weightmap import WeightMapParams, compute_weight_map


@dataclass
class SliceSample:
    image: np.ndarray  # [C, H, W] in [0, 1]
    label: np.ndarray  # [1, H, W] binary
    weight: Optional[np.ndarray] = None  # [1, H, W] in [0, 1]
    provenance: Tuple[str, int] = ("", -1)
    roi: Optional[np.ndarray] = None  # [1, H, W] binary ROI for the weight map
    geometry: Any = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] not in (1, 3):
            raise ShapeError(f"image must be [1|3, H, W], got {self.image.shape}")
        if self.label.shape != (1, *self.image.shape[1:]):
            raise ShapeError(f"label {self.label.shape} does not match image {self.image.shape}")
        if self.weight is None:
            self.weight = np.ones(self.label.shape, dtype=np.float32)


def slice_volume(voxels: np.ndarray, channels: int) -> List[Tuple[int, np.ndarray]]:
    """Split ``voxels`` [H, W, Z] along the last axis.

    Returns ``(center_index, image[C, H, W])`` pairs: one per slice for
    ``channels=1``; one per interior slice (triplet k-1, k, k+1) for ``channels=3``.
    """
    voxels = np.asarray(voxels)
    if voxels.ndim != 3:
        raise ShapeError(f"volume must be 3D, got {voxels.shape}")
    depth = voxels.shape[-1]
    if channels == 1:
        return [(k, voxels[None, :, :, k]) for k in range(depth)]
    if channels == 3:
        if depth < 3:
            raise ShapeError(f"3-channel slicing needs depth >= 3, got {depth}")
        return [(k, np.moveaxis(voxels[:, :, k - 1:k + 2], -1, 0)) for k in range(1, depth - 1)]
    raise ConfigurationError(f"channels must be 1 or 3, got {channels}")


def foreground_mask(labels: np.ndarray, target: str = "liver") -> np.ndarray:
    """Binary mask from LiTS labels (0 background, 1 liver, 2 tumor).

    ``liver`` is label >= 1 (liver including tumor), ``liver_only`` is label == 1,
    ``tumor`` is label == 2.
    """
    labels = np.asarray(labels)
    if target == "liver":
        return (labels >= 1).astype(np.uint8)
    if target == "liver_only":
        return (labels == 1).astype(np.uint8)
    if target == "tumor":
        return (labels == 2).astype(np.uint8)
    raise ConfigurationError(f"unknown foreground target {target!r}")


def make_samples(
    volume255: np.ndarray,
    labels: np.ndarray,
    channels: int = 1,
    target: str = "liver",
    weight_params: Optional[WeightMapParams] = None,
    roi: str = "none",
    volume_id: str = "volume",
) -> List[SliceSample]:
    """Liver-stage samples: image scaled to [0, 1], binary label, weight map."""
    if volume255.shape != labels.shape:
        raise ShapeError(f"volume {volume255.shape} and labels {labels.shape} differ")
    mask = foreground_mask(labels, target)
    tumor = foreground_mask(labels, "tumor")
    samples = []
    for k, img in slice_volume(volume255, channels):
        lab = mask[None, :, :, k]
        roi_map = tumor[None, :, :, k] if roi == "tumor" else None
        samples.append(
            SliceSample(
                image=(img / 255.0).astype(np.float32),
                label=lab,
                weight=sample_weight(lab, roi_map, weight_params),
                provenance=(volume_id, k),
                roi=roi_map,
            )
        )
    return samples


def sample_weight(label: np.ndarray, roi: Optional[np.ndarray], params: Optional[WeightMapParams]):
    params = params or WeightMapParams()
    p = WeightMapParams(params.w, params.sigma, None if roi is None else roi[0], params.exponent)
    return compute_weight_map(label[0], p)[None].astype(np.float32)


def filter_liver_slices(samples: List[SliceSample]) -> List[SliceSample]:
    return [s for s in samples if s.label.any()]
