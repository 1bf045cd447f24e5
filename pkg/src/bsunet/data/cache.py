"""Binary cache of preprocessed slices.

One ``.npz`` file per (stage, volume, channels) at
``<root>/<stage>/<volume_id>_c<channels>.npz`` with arrays:

    image        float32 [N, C, H, W]   network input in [0, 1]
    label        uint8   [N, 1, H, W]   binary target
    weight       float32 [N, 1, H, W]   weight map in [0, 1]
    roi          uint8   [N, 1, H, W]   ROI matrix (all zeros when unused)
    slice_index  int64   [N]            source slice (centre slice for 3C)
    geometry     int64   [N, 11]        tumor stage only: CascadeGeometry.to_array()
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import List

import numpy as np

from .cascade import CascadeGeometry
from .slicing import SliceSample

CACHE_ENV = "BSUNET_CACHE"


def cache_root(default=None) -> Path:
    return Path(os.environ.get(CACHE_ENV) or default or "cache")


def cache_path(root, stage: str, volume_id: str, channels: int) -> Path:
    return Path(root) / stage / f"{volume_id}_c{channels}.npz"


def write_cache(root, stage: str, volume_id: str, channels: int, samples: List[SliceSample]) -> Path:
    path = cache_path(root, stage, volume_id, channels)
    path.parent.mkdir(parents=True, exist_ok=True)
    if samples:
        h, w = samples[0].image.shape[1:]
        arrays = dict(
            image=np.stack([s.image for s in samples]).astype(np.float32),
            label=np.stack([s.label for s in samples]).astype(np.uint8),
            weight=np.stack([s.weight for s in samples]).astype(np.float32),
            roi=np.stack([s.roi if s.roi is not None else np.zeros((1, h, w), np.uint8)
                          for s in samples]).astype(np.uint8),
            slice_index=np.array([s.provenance[1] for s in samples], dtype=np.int64),
        )
        if samples[0].geometry is not None:
            arrays["geometry"] = np.stack([s.geometry.to_array() for s in samples])
    else:
        arrays = dict(image=np.zeros((0, channels, 1, 1), np.float32), slice_index=np.zeros(0, np.int64))
    np.savez_compressed(path, **arrays)
    return path


def read_cache(path) -> List[SliceSample]:
    path = Path(path)
    vid = path.name.rsplit("_c", 1)[0]
    with np.load(path) as z:
        if len(z["slice_index"]) == 0:
            return []
        geoms = z["geometry"] if "geometry" in z.files else None
        out = []
        for i, k in enumerate(z["slice_index"]):
            roi = z["roi"][i]
            out.append(SliceSample(
                image=z["image"][i], label=z["label"][i], weight=z["weight"][i],
                provenance=(vid, int(k)), roi=roi if roi.any() else None,
                geometry=None if geoms is None else CascadeGeometry.from_array(geoms[i]),
            ))
        return out


def load_cached_slice(root, stage: str, volume_id: str, slice_index: int, channels: int) -> SliceSample:
    for s in read_cache(cache_path(root, stage, volume_id, channels)):
        if s.provenance[1] == slice_index:
            return s
    raise KeyError((stage, volume_id, slice_index, channels))


def read_stage(root, stage: str, channels: int) -> List[SliceSample]:
    samples = []
    for path in sorted((Path(root) / stage).glob(f"*_c{channels}.npz")):
        samples.extend(read_cache(path))
    return samples
