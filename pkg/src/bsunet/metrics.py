"""Volume-level segmentation metrics: DPC, DG, VOE, RVD, ASSD, MSD, RSSD.

Conventions (A = truth, B = prediction):

* dice = 2|A&B| / (|A| + |B|), VOE = 1 - |A&B| / |A or B|, RVD = (|B| - |A|) / |A|
* surfaces are border voxels (6-connectivity by default); ASSD, MSD and RSSD
  are the mean, maximum and root-mean-square of the pooled directed surface
  distances in both directions, in mm.

Undefined values are reported as sentinels: RVD is ``inf`` for an empty truth
with a nonempty prediction, surface distances are ``nan`` when either mask is
empty. :func:`summarize` excludes sentinel values from the averages and
reports how many were dropped.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

COLUMNS = ("DPC", "DG", "VOE", "RVD", "ASSD", "MSD", "RSSD")


@dataclass
class MetricBundle:
    dice: float
    voe: float
    rvd: float
    assd: float
    msd: float
    rssd: float
    intersection: int = 0
    size_truth: int = 0
    size_pred: int = 0


def _binary(a):
    return np.asarray(a).astype(bool)


def overlap_metrics(pred, truth) -> Tuple[float, float, float]:
    p, t = _binary(pred), _binary(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    inter = int(np.count_nonzero(p & t))
    union = int(np.count_nonzero(p | t))
    np_, nt = int(p.sum()), int(t.sum())
    if union == 0:
        return 1.0, 0.0, 0.0
    dice = 2 * inter / (np_ + nt)
    voe = 1 - inter / union
    rvd = math.inf if nt == 0 else (np_ - nt) / nt
    return dice, voe, rvd


def dice_global(cases: Iterable[Tuple[np.ndarray, np.ndarray]]) -> float:
    inter = total = 0
    for pred, truth in cases:
        p, t = _binary(pred), _binary(truth)
        inter += int(np.count_nonzero(p & t))
        total += int(p.sum()) + int(t.sum())
    return 1.0 if total == 0 else 2 * inter / total


def surface(mask, connectivity: int = 1) -> np.ndarray:
    """Mask voxels with at least one neighbour outside the mask (image edges count as outside)."""
    m = _binary(mask)
    struct = ndimage.generate_binary_structure(m.ndim, connectivity)
    return m & ~ndimage.binary_erosion(m, structure=struct, border_value=0)


def directed_surface_distances(a, b, spacing, connectivity: int = 1) -> np.ndarray:
    """Distance from every surface voxel of ``a`` to the nearest surface voxel of ``b``."""
    sa, sb = surface(a, connectivity), surface(b, connectivity)
    dt = ndimage.distance_transform_edt(~sb, sampling=spacing)
    return dt[sa]


def surface_distances(pred, truth, spacing=(1.0, 1.0, 1.0), connectivity: int = 1) -> Tuple[float, float, float]:
    p, t = _binary(pred), _binary(truth)
    if not p.any() or not t.any():
        log.warning("surface distance undefined for an empty mask")
        return math.nan, math.nan, math.nan
    d = np.concatenate([
        directed_surface_distances(p, t, spacing, connectivity),
        directed_surface_distances(t, p, spacing, connectivity),
    ])
    return float(d.mean()), float(d.max()), float(np.sqrt(np.mean(d ** 2)))


def evaluate_case(pred, truth, spacing=(1.0, 1.0, 1.0), connectivity: int = 1) -> MetricBundle:
    p, t = _binary(pred), _binary(truth)
    dice, voe, rvd = overlap_metrics(p, t)
    assd, msd, rssd = surface_distances(p, t, spacing, connectivity)
    return MetricBundle(dice, voe, rvd, assd, msd, rssd,
                        int(np.count_nonzero(p & t)), int(t.sum()), int(p.sum()))


def summarize(bundles: Sequence[MetricBundle]) -> Dict[str, float]:
    """Corpus summary in table column order, plus counts of excluded undefined cases."""
    out: Dict[str, float] = {}
    out["DPC"] = float(np.mean([b.dice for b in bundles])) if bundles else math.nan
    total = sum(b.size_truth + b.size_pred for b in bundles)
    out["DG"] = 1.0 if total == 0 else 2 * sum(b.intersection for b in bundles) / total
    for col, attr in zip(COLUMNS[2:], ("voe", "rvd", "assd", "msd", "rssd")):
        vals = [getattr(b, attr) for b in bundles]
        ok = [v for v in vals if math.isfinite(v)]
        out[col] = float(np.mean(ok)) if ok else math.nan
        out[f"{col}_excluded"] = len(vals) - len(ok)
    return out


def bundle_row(case_id: str, b: MetricBundle) -> List:
    d = asdict(b)
    return [case_id, d["dice"], d["voe"], d["rvd"], d["assd"], d["msd"], d["rssd"]]
