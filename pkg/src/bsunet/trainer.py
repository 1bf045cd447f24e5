"""Two-phase bottleneck-supervised training, baseline training and volume prediction.

Phase one fits the skip-less encoding U-Net as a label-map autoencoder with
the dice loss. Phase two freezes it and trains the segmentation U-Net on

    w1 * weighted_dice(pred, label, W) + w2 * euclidean(code(label), code(image))

where ``code`` is the flattened bottleneck after the dense block.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn

from .data.slicing import SliceSample, slice_volume
from .data.cascade import SkipSlice, cascade_invert, cascade_preprocess
from .data.transforms import augment_liver, augment_tumor
from .errors import ConfigurationError, ShapeError, TrainingError
from .losses import LossWeights, dice_loss, euclidean_bottleneck_loss, total_loss, weighted_dice_loss
from .networks import (
    NetworkSpec, OriginalUNetSpec, build_encoding_unet, build_network, dumps_spec, loads_spec,
)
from .weightmap import WeightMapParams

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "epoch", "lr", "dice", "dice_unweighted", "euclidean", "total")
CHECKPOINT_FORMAT = "bsunet-checkpoint/1"


@dataclass
class TrainConfig:
    stage: str = "liver"
    channels: int = 1
    batch_size: int = 10
    lr: float = 1e-4
    epochs: int = 50
    lr_decay: float = 0.3
    lr_period: int = 3
    w1: float = 0.5
    w2: float = 0.5
    wm_w: float = 0.05
    wm_sigma: float = 20.0
    roi: str = "none"
    exponent: str = "linear"
    euclid_reduction: str = "mean"
    optimizer: str = "adam"
    momentum: float = 0.9
    augment: bool = True
    max_iterations: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.stage not in ("liver", "tumor"):
            raise ConfigurationError(f"stage must be liver or tumor, got {self.stage!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.lr <= 0:
            raise ConfigurationError("batch size and epochs must be >= 1 and lr > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        self.loss_weights  # validates w1 + w2 == 1

    @classmethod
    def for_stage(cls, stage: str, **overrides) -> "TrainConfig":
        base = {"liver": dict(batch_size=10), "tumor": dict(batch_size=20)}[stage]
        return cls(stage=stage, **{**base, **overrides})

    @classmethod
    def from_mapping(cls, mapping) -> "TrainConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.name == "max_iterations":
                kwargs[f.name] = None if str(raw).lower() in ("", "none") else int(raw)
            elif f.name == "augment":
                kwargs[f.name] = str(raw).lower() in ("1", "true", "yes")
            elif isinstance(f.default, bool):
                kwargs[f.name] = bool(raw)
            else:
                kwargs[f.name] = type(f.default)(raw)
        stage = kwargs.pop("stage", "liver")
        return cls.for_stage(stage, **kwargs)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w1, self.w2)

    @property
    def weight_params(self) -> WeightMapParams:
        return WeightMapParams(self.wm_w, self.wm_sigma, exponent=self.exponent)


@dataclass
class TrainState:
    model: nn.Module
    epoch: int = 0
    iteration: int = 0
    history: List[dict] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)


def lr_schedule(n: int, init: float, base: float = 0.3, period: int = 3) -> float:
    """Step decay, epochs counted from 0: ``init * base ** floor(n / period)``."""
    if n < 0:
        raise ValueError("epoch index must be >= 0")
    return init * base ** (n // period)


# -- checkpoints -------------------------------------------------------------


def freeze(model: nn.Module) -> nn.Module:
    for p in model.parameters():
        p.requires_grad_(False)
    return model.eval()


def is_frozen(model: nn.Module) -> bool:
    return not any(p.requires_grad for p in model.parameters())


def save_checkpoint(model: nn.Module, path, **extra) -> Path:
    """Checkpoint container: a torch pickle of a dict holding the format tag,
    the network spec as INI text, the state dict and training flags."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "spec": dumps_spec(model.spec),
        "state_dict": model.state_dict(),
        "is_trained": bool(getattr(model, "is_trained", False)),
        "frozen": is_frozen(model),
        "extra": extra,
    }, path)
    return path


def load_checkpoint(path) -> nn.Module:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    model = build_network(loads_spec(ckpt["spec"]))
    model.load_state_dict(ckpt["state_dict"])
    model.is_trained = ckpt["is_trained"]
    model.eval()
    if ckpt["frozen"]:
        freeze(model)
    return model


# -- training loop -----------------------------------------------------------


class LossLog:
    """Append-only per-iteration loss CSV (optional) mirrored in memory."""

    def __init__(self, path=None):
        self.rows: List[dict] = []
        self._fh = None
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", newline="")
            self._writer = csv.DictWriter(self._fh, LOSS_COLUMNS)
            self._writer.writeheader()

    def append(self, row: dict) -> None:
        if self.rows and row["iteration"] <= self.rows[-1]["iteration"]:
            raise TrainingError("loss history must be monotone in iteration")
        self.rows.append(row)
        if self._fh:
            self._writer.writerow({k: ("" if row.get(k) is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                                   for k in LOSS_COLUMNS})

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def _make_optimizer(model, config: TrainConfig):
    params = [p for p in model.parameters() if p.requires_grad]
    if config.optimizer == "adam":
        return torch.optim.Adam(params, lr=config.lr)
    return torch.optim.SGD(params, lr=config.lr, momentum=config.momentum)


def _augmenter(config: TrainConfig) -> Optional[Callable]:
    if not config.augment:
        return None
    fn = augment_liver if config.stage == "liver" else augment_tumor
    return lambda s, rng: fn(s, rng, config.weight_params)


def _stack(samples: Sequence[SliceSample], attr: str) -> torch.Tensor:
    return torch.from_numpy(np.stack([getattr(s, attr) for s in samples]).astype(np.float32))


def _fit(model: nn.Module, samples: Sequence[SliceSample], config: TrainConfig,
         step: Callable, loss_path=None) -> TrainState:
    if not samples:
        raise TrainingError("training set is empty")
    state = TrainState(model)
    lossy = LossLog(loss_path)
    order_rng = np.random.default_rng(config.seed)
    augment = _augmenter(config)
    opt = _make_optimizer(model, config)
    model.train()
    try:
        for epoch in range(config.epochs):
            lr = lr_schedule(epoch, config.lr, config.lr_decay, config.lr_period)
            for g in opt.param_groups:
                g["lr"] = lr
            order = order_rng.permutation(len(samples))
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = [samples[i] for i in idx]
                if augment is not None:
                    batch = [augment(s, np.random.default_rng([config.seed, epoch, int(i)]))
                             for s, i in zip(batch, idx)]
                opt.zero_grad()
                loss, parts = step(batch)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, iteration {state.iteration + 1}: {parts}"
                    )
                loss.backward()
                opt.step()
                state.iteration += 1
                lossy.append({"iteration": state.iteration, "epoch": epoch, "lr": lr,
                              "total": float(loss.detach()), **parts})
                if config.max_iterations and state.iteration >= config.max_iterations:
                    break
            state.epoch = epoch
            if config.max_iterations and state.iteration >= config.max_iterations:
                break
    finally:
        lossy.close()
    state.history = lossy.rows
    model.is_trained = True
    return state


def _seeded_model(spec, seed: int) -> nn.Module:
    torch.manual_seed(seed)
    return build_network(spec)


def train_encoding_unet(samples: Sequence[SliceSample], spec: NetworkSpec, config: TrainConfig,
                        loss_path=None, checkpoint=None) -> TrainState:
    """Phase one: label map in, label map out, plain dice loss. Returns a frozen encoder."""
    torch.manual_seed(config.seed)
    encoder = build_encoding_unet(spec)

    def step(batch):
        label = _stack(batch, "label")
        recon = encoder(label)
        loss = dice_loss(recon, label)
        d = float(loss.detach())
        return loss, {"dice": d, "dice_unweighted": d, "euclidean": None}

    state = _fit(encoder, samples, config, step, loss_path)
    freeze(encoder)
    if checkpoint:
        state.checkpoints.append(save_checkpoint(encoder, checkpoint, phase="encoder"))
    return state


def train_segmentation_unet(samples: Sequence[SliceSample], encoder: nn.Module, spec: NetworkSpec,
                            config: TrainConfig, loss_path=None, checkpoint=None) -> TrainState:
    """Phase two: bottleneck-supervised segmentation training against a frozen encoder."""
    if not getattr(encoder, "is_trained", False) or not is_frozen(encoder):
        raise TrainingError("segmentation training needs a trained, frozen encoding U-Net")
    weights = config.loss_weights
    torch.manual_seed(config.seed)
    model = build_network(spec)
    size = samples[0].image.shape[-1] if samples else 0
    if samples and encoder.spec.code_length(size) != spec.code_length(size):
        raise ConfigurationError("encoder and segmenter bottleneck code lengths differ")
    encoder.eval()

    def step(batch):
        image, label, w = _stack(batch, "image"), _stack(batch, "label"), _stack(batch, "weight")
        with torch.no_grad():
            _, t1 = encoder.forward_with_bottleneck(label)
        pred, t2 = model.forward_with_bottleneck(image)
        wd = weighted_dice_loss(pred, label, w)
        eu = euclidean_bottleneck_loss(t1, t2, config.euclid_reduction)
        with torch.no_grad():
            du = float(dice_loss(pred, label))
        return total_loss(wd, eu, weights), {
            "dice": float(wd.detach()), "dice_unweighted": du, "euclidean": float(eu.detach())}

    state = _fit(model, samples, config, step, loss_path)
    if checkpoint:
        state.checkpoints.append(save_checkpoint(model, checkpoint, phase="segmenter"))
    return state


def train_base_unet(samples: Sequence[SliceSample], spec: Union[NetworkSpec, OriginalUNetSpec],
                    config: TrainConfig, loss_path=None, checkpoint=None) -> TrainState:
    """Single-phase baseline: weighted dice only, no bottleneck supervision."""
    torch.manual_seed(config.seed)
    model = build_network(spec)

    def step(batch):
        image, label, w = _stack(batch, "image"), _stack(batch, "label"), _stack(batch, "weight")
        pred = model(image)
        wd = weighted_dice_loss(pred, label, w)
        with torch.no_grad():
            du = float(dice_loss(pred, label))
        return wd, {"dice": float(wd.detach()), "dice_unweighted": du, "euclidean": None}

    state = _fit(model, samples, config, step, loss_path)
    if checkpoint:
        state.checkpoints.append(save_checkpoint(model, checkpoint, phase="base"))
    return state


# -- inference ---------------------------------------------------------------

THRESHOLD = 0.5


@torch.no_grad()
def predict_probabilities(model: nn.Module, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Probability maps for images [N, C, H, W] in [0, 1]."""
    model.eval()
    out = []
    for start in range(0, len(images), batch_size):
        x = torch.from_numpy(np.ascontiguousarray(images[start:start + batch_size], dtype=np.float32))
        out.append(model(x).numpy())
    return np.concatenate(out) if out else np.zeros((0, 1) + images.shape[2:], np.float32)


def binarize(prob: np.ndarray, threshold: float = THRESHOLD) -> np.ndarray:
    """Foreground where probability >= threshold (ties go to foreground)."""
    return (prob >= threshold).astype(np.uint8)


def _slices_for_prediction(volume255: np.ndarray, channels: int, boundary: str):
    if channels == 3 and boundary == "replicate":
        padded = np.concatenate([volume255[..., :1], volume255, volume255[..., -1:]], axis=-1)
        return [(k - 1, img) for k, img in slice_volume(padded, 3)]
    if boundary not in ("empty", "replicate"):
        raise ConfigurationError(f"unknown boundary policy {boundary!r}")
    return slice_volume(volume255, channels)


def predict_volume(model: nn.Module, volume255: np.ndarray, channels: int = 1,
                   boundary: str = "empty", batch_size: int = 8) -> np.ndarray:
    """Slice-wise prediction restacked onto the input grid [H, W, Z].

    With 3 channels each triplet is attributed to its centre slice; the first
    and last slices are left empty unless ``boundary="replicate"``.
    """
    volume255 = np.asarray(volume255)
    if volume255.ndim != 3:
        raise ShapeError(f"volume must be 3D, got {volume255.shape}")
    pairs = _slices_for_prediction(volume255, channels, boundary)
    out = np.zeros(volume255.shape, dtype=np.uint8)
    if not pairs:
        return out
    images = np.stack([img for _, img in pairs]) / 255.0
    masks = binarize(predict_probabilities(model, images, batch_size))
    for (k, _), m in zip(pairs, masks):
        out[:, :, k] = m[0]
    return out


def cascade_predict(liver_model: nn.Module, tumor_model: nn.Module, volume255: np.ndarray,
                    channels: int = 1, tumor_channels: Optional[int] = None,
                    tumor_size: int = 224, boundary: str = "empty") -> np.ndarray:
    """Liver mask first, then tumors inside liver-cropped slices; LiTS labels {0, 1, 2}."""
    tumor_channels = tumor_channels or channels
    liver = predict_volume(liver_model, volume255, channels, boundary)
    labels = liver.copy()
    crops, geoms = [], []
    for k, img in _slices_for_prediction(volume255, tumor_channels, boundary):
        try:
            crop, g = cascade_preprocess(img / 255.0, liver[:, :, k], size=tumor_size, slice_index=k)
        except SkipSlice:
            continue
        crops.append(crop)
        geoms.append(g)
    if crops:
        masks = binarize(predict_probabilities(tumor_model, np.stack(crops)))
        for m, g in zip(masks, geoms):
            tumor = cascade_invert(m[0], g).astype(bool) & liver[:, :, g.slice_index].astype(bool)
            labels[:, :, g.slice_index][tumor] = 2
    return labels


def read_loss_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            r[k] = None if v == "" else (int(v) if k in ("iteration", "epoch") else float(v))
    return rows
