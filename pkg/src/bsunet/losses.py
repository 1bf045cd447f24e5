"""Soft dice, weighted dice, bottleneck Euclidean and combined losses.

Dice sums run over every element of the inputs, so a batch is treated as one
pooled map. Intersection is the soft product ``pred * target``.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigurationError, DomainError, ShapeError

EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    w1: float = 0.5
    w2: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.w1 <= 1.0 and 0.0 <= self.w2 <= 1.0):
            raise ConfigurationError(f"loss weights must lie in [0, 1], got {self.w1}, {self.w2}")
        if abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ConfigurationError(f"loss weights must sum to 1, got {self.w1} + {self.w2}")


def _check_pair(pred, target, weight=None):
    if pred.shape != target.shape:
        raise ShapeError(f"pred {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    if weight is not None and weight.shape != pred.shape:
        raise ShapeError(f"weight map {tuple(weight.shape)} does not match pred {tuple(pred.shape)}")
    with torch.no_grad():
        if pred.numel() and (pred.min() < 0 or pred.max() > 1):
            raise DomainError("predictions must lie in [0, 1]")


def dice_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    _check_pair(pred, target)
    inter = (pred * target).sum()
    return 1 - (2 * inter + eps) / (pred.sum() + target.sum() + eps)


def weighted_dice_loss(pred, target, weight, eps: float = EPS) -> torch.Tensor:
    _check_pair(pred, target, weight)
    inter = (weight * pred * target).sum()
    return 1 - (2 * inter + eps) / ((weight * pred).sum() + (weight * target).sum() + eps)


def euclidean_bottleneck_loss(t1: torch.Tensor, t2: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Squared distance between bottleneck codes.

    ``reduction="mean"`` divides the sum of squares by the code length ``n``;
    ``"sum"`` keeps the plain sum. Codes of shape [N, n] are averaged over N.
    """
    if t1.shape != t2.shape:
        raise ConfigurationError(
            f"bottleneck code shapes differ: {tuple(t1.shape)} vs {tuple(t2.shape)}"
        )
    sq = (t1 - t2) ** 2
    if reduction == "mean":
        return sq.mean()
    if reduction == "sum":
        return sq.sum(dim=-1).mean() if sq.dim() > 1 else sq.sum()
    raise ConfigurationError(f"unknown reduction {reduction!r}")


def total_loss(dice, euclid, weights: LossWeights):
    return weights.w1 * dice + weights.w2 * euclid
