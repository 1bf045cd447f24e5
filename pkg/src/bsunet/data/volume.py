"""CT volume container, NIfTI IO and intensity preprocessing."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import nibabel as nib
import numpy as np

from ..errors import DegenerateVolumeError, ShapeError

HU_MIN = -200.0
HU_MAX = 250.0


@dataclass
class CtVolume:
    voxels: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    identifier: str = "volume"

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels)
        if self.voxels.ndim != 3 or min(self.voxels.shape) < 1:
            raise ShapeError(f"CT volume must be 3D with positive dims, got {self.voxels.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def shape(self):
        return self.voxels.shape

    @property
    def depth(self) -> int:
        return self.voxels.shape[-1]


def volume_id(path) -> str:
    name = Path(path).name
    for ext in (".nii.gz", ".nii"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return Path(path).stem


def load_nifti(path, dtype=np.float32) -> CtVolume:
    img = nib.load(str(path))
    data = np.asarray(img.dataobj, dtype=dtype)
    if data.ndim == 4 and data.shape[-1] == 1:
        data = data[..., 0]
    return CtVolume(data, tuple(img.header.get_zooms()[:3]), img.affine, volume_id(path))


def save_nifti(volume: CtVolume, path, dtype=None) -> None:
    data = volume.voxels if dtype is None else volume.voxels.astype(dtype)
    img = nib.Nifti1Image(data, volume.affine)
    img.header.set_zooms(volume.spacing)
    nib.save(img, str(path))


def hu_window(voxels: np.ndarray, lo: float = HU_MIN, hi: float = HU_MAX) -> np.ndarray:
    return np.clip(voxels, lo, hi)


def minmax_normalize(voxels: np.ndarray, bounds: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Linear map onto [0, 255].

    Uses the volume's own min/max unless fixed ``bounds`` are given (the
    fixed variant keeps intensities comparable across volumes).
    """
    voxels = np.asarray(voxels, dtype=np.float64)
    lo, hi = (voxels.min(), voxels.max()) if bounds is None else bounds
    if hi == lo:
        raise DegenerateVolumeError("cannot min-max normalize a constant volume")
    return (voxels - lo) / (hi - lo) * 255.0


def preprocess_hu(voxels: np.ndarray, fixed_bounds: bool = False) -> np.ndarray:
    """Window to [-200, 250] HU then min-max to [0, 255]."""
    clipped = hu_window(voxels)
    return minmax_normalize(clipped, (HU_MIN, HU_MAX) if fixed_bounds else None)
