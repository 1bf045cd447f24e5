"""Synthetic shapes and CT-like volumes for tests, desk-scale checks and smoke runs."""
from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np

from .volume import CtVolume, save_nifti


def ellipse_mask(size: int, center, radii, angle: float = 0.0) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = yy - center[0], xx - center[1]
    u, v = c * dx + s * dy, -s * dx + c * dy
    return ((u / radii[1]) ** 2 + (v / radii[0]) ** 2 <= 1.0).astype(np.uint8)


def random_ellipse(rng: np.random.Generator, size: int, radii=(0.15, 0.32)) -> np.ndarray:
    """Ellipse with semi-axes drawn from ``radii`` (fractions of ``size``), fully inside the image."""
    r = rng.uniform(*radii, size=2) * size
    margin = r.max() + 2
    center = rng.uniform(margin, size - margin, size=2)
    return ellipse_mask(size, center, r, rng.uniform(0, np.pi))


def ellipse_label_maps(n: int = 64, size: int = 32, seed: int = 0, radii=(0.15, 0.32)) -> np.ndarray:
    """``n`` random elliptical label maps, shape [n, 1, size, size]."""
    rng = np.random.default_rng(seed)
    return np.stack([random_ellipse(rng, size, radii)[None] for _ in range(n)])


def image_label_pairs(n: int = 8, size: int = 32, seed: int = 0,
                      radii=(0.15, 0.32)) -> Tuple[np.ndarray, np.ndarray]:
    """Noisy images in [0, 1] whose bright ellipse is the label."""
    rng = np.random.default_rng(seed)
    labels = ellipse_label_maps(n, size, seed, radii)
    images = 0.25 + 0.5 * labels + rng.normal(0, 0.05, labels.shape)
    return np.clip(images, 0, 1).astype(np.float32), labels


def synthetic_case(shape=(64, 64, 12), seed: int = 0, identifier: str = "case") -> Tuple[CtVolume, CtVolume]:
    """CT-like volume (HU) with a liver ellipsoid and one bright lesion inside it.

    Labels follow the LiTS convention: 0 background, 1 liver, 2 tumor.
    """
    rng = np.random.default_rng(seed)
    h, w, d = shape
    zz, yy, xx = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
    yy, xx, zz = (np.moveaxis(a, 0, -1) for a in (yy, xx, zz))
    body = ((yy - h / 2) / (0.45 * h)) ** 2 + ((xx - w / 2) / (0.45 * w)) ** 2 <= 1
    cy, cx = h * rng.uniform(0.4, 0.55), w * rng.uniform(0.35, 0.5)
    ry, rx, rz = h * rng.uniform(0.2, 0.26), w * rng.uniform(0.22, 0.28), d * 0.45
    liver = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 + ((zz - d / 2) / rz) ** 2 <= 1
    ty, tx, tr = cy + rng.uniform(-0.3, 0.3) * ry, cx + rng.uniform(-0.3, 0.3) * rx, 0.35 * min(ry, rx)
    tumor = liver & (((yy - ty) / tr) ** 2 + ((xx - tx) / tr) ** 2 + ((zz - d / 2) / (0.5 * rz)) ** 2 <= 1)

    hu = np.full(shape, -1000.0)
    hu[body] = 0.0
    hu[liver] = 100.0
    hu[tumor] = 220.0
    hu += rng.normal(0, 10, shape)
    labels = np.zeros(shape, dtype=np.uint8)
    labels[liver] = 1
    labels[tumor] = 2
    spacing = (0.8, 0.8, 2.5)
    return (CtVolume(hu.astype(np.float32), spacing, identifier=identifier),
            CtVolume(labels, spacing, identifier=identifier))


def write_synthetic_dataset(root, n: int = 2, shape=(64, 64, 12), seed: int = 0) -> List[str]:
    """Write ``volumes/<id>.nii.gz`` and ``labels/<id>.nii.gz`` pairs under ``root``."""
    root = Path(root)
    (root / "volumes").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(n):
        vid = f"volume-{i}"
        vol, lab = synthetic_case(shape, seed + i, vid)
        save_nifti(vol, root / "volumes" / f"{vid}.nii.gz")
        save_nifti(lab, root / "labels" / f"{vid}.nii.gz", dtype=np.uint8)
        ids.append(vid)
    return ids
