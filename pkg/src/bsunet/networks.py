"""Base U-Net, skip-less encoding U-Net and the reference original U-Net.

Networks are described by a :class:`NetworkSpec` (an ordered block list) that
round-trips through a small INI file, see :func:`save_spec` / :func:`load_spec`.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn

from .blocks import DenseBlock, DownBlock, TransitionBlock, UpBlock, count_parameters, init_weights
from .errors import ConfigurationError, ShapeError

INCEPTION_BLOCKS = 6

# Calibrated schedule: count_parameters(BaseUNet(CALIBRATED)) == 6_588_139 for one input channel.
CALIBRATED_WIDTHS = (8, 16, 32, 64, 128, 256)
CALIBRATED_DOWN_INNER = 118
CALIBRATED_GROWTH = 216
CALIBRATED_UP_INNER = 72
CALIBRATED_UP_KERNEL = 5

_FIELDS = {"trans": ("a", "b"), "down": ("a", "p", "b"), "dense": ("a", "k"), "up": ("a", "p", "b", "k")}


@dataclass
class BlockEntry:
    kind: str
    a: int
    b: Optional[int] = None
    p: Optional[int] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _FIELDS:
            raise ConfigurationError(f"unknown block kind {self.kind!r}")
        for f in _FIELDS[self.kind]:
            if getattr(self, f) is None:
                raise ConfigurationError(f"{self.kind} block is missing parameter {f!r}")

    @property
    def out_channels(self) -> int:
        return self.a if self.kind == "dense" else self.b

    def build(self) -> nn.Module:
        if self.kind == "trans":
            return TransitionBlock(self.a, self.b)
        if self.kind == "down":
            return DownBlock(self.a, self.p, self.b)
        if self.kind == "dense":
            return DenseBlock(self.a, self.k)
        return UpBlock(self.a, self.p, self.b, self.k)

    def to_line(self) -> str:
        return " ".join([self.kind] + [f"{f}={getattr(self, f)}" for f in _FIELDS[self.kind]])

    @classmethod
    def from_line(cls, line: str) -> "BlockEntry":
        kind, *tokens = line.split()
        kwargs = {}
        for tok in tokens:
            key, sep, value = tok.partition("=")
            if not sep or key not in ("a", "b", "p", "k"):
                raise ConfigurationError(f"malformed block token {tok!r} in {line!r}")
            kwargs[key] = int(value)
        return cls(kind, **kwargs)


@dataclass
class NetworkSpec:
    """Ordered block schedule of a base/encoding U-Net.

    Up-block input widths include the skip channels when ``skip_connections``
    is true; :meth:`without_skips` derives the matching encoding U-Net.
    """

    blocks: List[BlockEntry]
    in_channels: int = 1
    out_channels: int = 1
    skip_connections: bool = True
    head_kernel: int = 1
    name: str = "base-unet"

    @property
    def encoder(self) -> List[BlockEntry]:
        return [e for e in self.blocks if e.kind in ("trans", "down")]

    @property
    def decoder(self) -> List[BlockEntry]:
        return [e for e in self.blocks if e.kind == "up"]

    @property
    def num_down(self) -> int:
        return sum(e.kind == "down" for e in self.blocks)

    @property
    def bottleneck_channels(self) -> int:
        return next(e for e in self.blocks if e.kind == "dense").a

    def skip_widths(self) -> List[int]:
        """Widths of the encoder features concatenated onto up-blocks 2..d and the head."""
        outs = [e.out_channels for e in self.encoder]
        return outs[-2::-1]

    def validate(self) -> "NetworkSpec":
        kinds = [e.kind for e in self.blocks]
        d = self.num_down
        expected = ["trans"] + ["down"] * d + ["dense"] + ["up"] * d
        if kinds != expected:
            raise ConfigurationError(
                f"{self.name}: block order must be trans, {d} x down, dense, {d} x up; got {kinds}"
            )
        if 1 + d != INCEPTION_BLOCKS:
            raise ConfigurationError(
                f"{self.name}: encoding path needs {INCEPTION_BLOCKS} inception blocks, has {1 + d}"
            )
        if self.in_channels not in (1, 3) or self.out_channels < 1 or self.head_kernel % 2 == 0:
            raise ConfigurationError(f"{self.name}: bad in/out channels or even head kernel")
        skips = self.skip_widths()
        prev = self.in_channels
        for i, e in enumerate(self.blocks):
            want = prev
            if e.kind == "up" and self.skip_connections:
                j = i - (2 + d)
                if j > 0:
                    want += skips[j - 1]
            if e.a != want:
                raise ConfigurationError(
                    f"{self.name}: block {i} ({e.to_line()}) expects {want} input channels, not {e.a}"
                )
            prev = e.out_channels
        return self

    def head_in_channels(self) -> int:
        last = self.decoder[-1].out_channels
        return last + (self.skip_widths()[-1] if self.skip_connections else 0)

    def without_skips(self, in_channels: int = 1) -> "NetworkSpec":
        """Skip-less counterpart consuming ``in_channels`` (the label map by default)."""
        blocks = [replace(e) for e in self.blocks]
        blocks[0].a = in_channels
        prev = None
        for e in blocks:
            if e.kind == "up":
                e.a = prev
            prev = e.out_channels
        return replace(
            self, blocks=blocks, in_channels=in_channels, skip_connections=False,
            name=self.name + "-encoding",
        ).validate()

    def with_input_channels(self, in_channels: int) -> "NetworkSpec":
        blocks = [replace(e) for e in self.blocks]
        blocks[0].a = in_channels
        return replace(self, blocks=blocks, in_channels=in_channels).validate()

    def code_length(self, h: int, w: Optional[int] = None) -> int:
        w = h if w is None else w
        f = 2 ** self.num_down
        return self.bottleneck_channels * (h // f) * (w // f)


def make_base_spec(
    in_channels: int = 1,
    widths: Sequence[int] = CALIBRATED_WIDTHS,
    down_inner: Union[int, Sequence[int]] = CALIBRATED_DOWN_INNER,
    growth: int = CALIBRATED_GROWTH,
    up_inner: Union[int, Sequence[int]] = CALIBRATED_UP_INNER,
    up_kernel: int = CALIBRATED_UP_KERNEL,
    head_kernel: int = 1,
    out_channels: int = 1,
    skip_connections: bool = True,
    name: str = "base-unet",
) -> NetworkSpec:
    """Mirror-symmetric schedule: stem transition to ``widths[0]``, one down block per
    doubling, dense bottleneck, then up blocks retracing the widths."""
    d = len(widths) - 1
    down_inner = [down_inner] * d if isinstance(down_inner, int) else list(down_inner)
    up_inner = [up_inner] * d if isinstance(up_inner, int) else list(up_inner)
    blocks = [BlockEntry("trans", in_channels, b=widths[0])]
    for i in range(d):
        blocks.append(BlockEntry("down", widths[i], b=widths[i + 1], p=down_inner[i]))
    blocks.append(BlockEntry("dense", widths[-1], k=growth))
    prev = widths[-1]
    for i in range(d):
        a = prev + (widths[d - i] if skip_connections and i > 0 else 0)
        blocks.append(BlockEntry("up", a, b=widths[d - 1 - i], p=up_inner[i], k=up_kernel))
        prev = widths[d - 1 - i]
    spec = NetworkSpec(blocks, in_channels, out_channels, skip_connections, head_kernel, name)
    return spec.validate()


def desk_spec(in_channels: int = 1, skip_connections: bool = True) -> NetworkSpec:
    """Narrow schedule with the calibrated topology, small enough for CPU tests."""
    return make_base_spec(
        in_channels, widths=(8, 16, 16, 32, 32, 64), down_inner=8, growth=16, up_inner=32,
        up_kernel=3, skip_connections=skip_connections, name="desk-unet",
    )


class BaseUNet(nn.Module):
    """U-shaped network built from a :class:`NetworkSpec`; sigmoid output."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec.validate()
        enc = spec.encoder
        self.stem = enc[0].build()
        self.downs = nn.ModuleList(e.build() for e in enc[1:])
        self.dense = next(e for e in spec.blocks if e.kind == "dense").build()
        self.ups = nn.ModuleList(e.build() for e in spec.decoder)
        hk = spec.head_kernel
        self.head = nn.Conv2d(spec.head_in_channels(), spec.out_channels, hk, padding=hk // 2)
        self.is_trained = False
        init_weights(self)

    def _check(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"{self.spec.name} expects [N, {self.spec.in_channels}, S, S], got {tuple(x.shape)}"
            )
        f = 2 ** self.spec.num_down
        if x.shape[-2] % f or x.shape[-1] % f:
            raise ShapeError(f"{self.spec.name}: spatial size {tuple(x.shape[-2:])} not divisible by {f}")

    def forward_with_bottleneck(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        self._check(x)
        feats = [self.stem(x)]
        for down in self.downs:
            feats.append(down(feats[-1]))
        z = self.dense(feats[-1])
        y = z
        skips = feats[-2::-1]
        for i, up in enumerate(self.ups):
            if i > 0 and self.spec.skip_connections:
                y = torch.cat([y, skips[i - 1]], dim=1)
            y = up(y)
        if self.spec.skip_connections:
            y = torch.cat([y, skips[-1]], dim=1)
        return torch.sigmoid(self.head(y)), z.flatten(1)

    def forward(self, x):
        return self.forward_with_bottleneck(x)[0]


def build_base_unet(spec: NetworkSpec) -> BaseUNet:
    if not spec.skip_connections:
        raise ConfigurationError("build_base_unet needs a spec with skip connections")
    return BaseUNet(spec)


def build_encoding_unet(spec: NetworkSpec) -> BaseUNet:
    """Label-map autoencoder: ``spec`` with skips removed and a 1-channel input."""
    if spec.skip_connections:
        spec = spec.without_skips()
    return BaseUNet(spec)


def forward_with_bottleneck(network: nn.Module, image: torch.Tensor):
    """Single pass returning (probability map, flattened bottleneck code)."""
    return network.forward_with_bottleneck(image)


# -- reference U-Net ---------------------------------------------------------


@dataclass
class OriginalUNetSpec:
    in_channels: int = 1
    num_classes: int = 2
    base_width: int = 32
    depth: int = 4
    up_kernel: int = 4
    head_kernel: int = 3
    name: str = "original-unet"

    def validate(self) -> "OriginalUNetSpec":
        if self.up_kernel % 2 or self.up_kernel < 2:
            raise ConfigurationError("original U-Net up-conv kernel must be even (padding k/2 - 1)")
        if self.depth < 1 or self.base_width < 1 or self.num_classes < 2:
            raise ConfigurationError(f"bad original U-Net spec {self}")
        return self

    @property
    def widths(self) -> List[int]:
        return [self.base_width * 2 ** i for i in range(self.depth + 1)]


def _double_conv(a: int, b: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(a, b, 3, padding=1), nn.BatchNorm2d(b), nn.ReLU(),
        nn.Conv2d(b, b, 3, padding=1), nn.BatchNorm2d(b), nn.ReLU(),
    )


class OriginalUNet(nn.Module):
    """Plain contracting/expanding U-Net with 'same' padding and a softmax head.

    ``forward`` returns the foreground-class probability as a single channel,
    so the network is interchangeable with :class:`BaseUNet` downstream.
    """

    def __init__(self, spec: OriginalUNetSpec):
        super().__init__()
        self.spec = spec.validate()
        w = spec.widths
        self.encs = nn.ModuleList([_double_conv(spec.in_channels, w[0])])
        self.encs.extend(_double_conv(w[i - 1], w[i]) for i in range(1, len(w)))
        self.pool = nn.MaxPool2d(2)
        k = spec.up_kernel
        self.upconvs = nn.ModuleList(
            nn.ConvTranspose2d(w[i], w[i - 1], k, stride=2, padding=k // 2 - 1, bias=False)
            for i in range(len(w) - 1, 0, -1)
        )
        self.decs = nn.ModuleList(_double_conv(2 * w[i - 1], w[i - 1]) for i in range(len(w) - 1, 0, -1))
        self.head = nn.Conv2d(w[0], spec.num_classes, spec.head_kernel, padding=spec.head_kernel // 2)
        self.is_trained = False
        init_weights(self)

    def forward_with_bottleneck(self, x):
        f = 2 ** self.spec.depth
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels or x.shape[-1] % f or x.shape[-2] % f:
            raise ShapeError(f"{self.spec.name}: unsupported input shape {tuple(x.shape)}")
        feats = []
        for i, enc in enumerate(self.encs):
            x = enc(x if i == 0 else self.pool(x))
            feats.append(x)
        z = x
        for up, dec, skip in zip(self.upconvs, self.decs, feats[-2::-1]):
            x = dec(torch.cat([up(x), skip], dim=1))
        probs = torch.softmax(self.head(x), dim=1)
        return probs[:, 1:2], z.flatten(1)

    def forward(self, x):
        return self.forward_with_bottleneck(x)[0]


def build_original_unet(spec: Optional[OriginalUNetSpec] = None) -> OriginalUNet:
    return OriginalUNet(spec or OriginalUNetSpec())


def build_network(spec) -> nn.Module:
    if isinstance(spec, OriginalUNetSpec):
        return build_original_unet(spec)
    return BaseUNet(spec)


def parameter_table(network: nn.Module) -> List[Tuple[str, int]]:
    """Per top-level child parameter counts, with ModuleLists expanded."""
    rows = []
    for name, child in network.named_children():
        if isinstance(child, nn.ModuleList):
            rows.extend((f"{name}.{i}", count_parameters(m)) for i, m in enumerate(child))
        else:
            rows.append((name, count_parameters(child)))
    return [r for r in rows if r[1]]


# -- configuration file ------------------------------------------------------


def _spec_to_config(spec) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if isinstance(spec, OriginalUNetSpec):
        cfg["network"] = {
            "kind": "original", "name": spec.name, "in_channels": str(spec.in_channels),
            "num_classes": str(spec.num_classes), "base_width": str(spec.base_width),
            "depth": str(spec.depth), "up_kernel": str(spec.up_kernel),
            "head_kernel": str(spec.head_kernel),
        }
    else:
        cfg["network"] = {
            "kind": "base", "name": spec.name, "in_channels": str(spec.in_channels),
            "out_channels": str(spec.out_channels),
            "skip_connections": str(spec.skip_connections).lower(),
            "head_kernel": str(spec.head_kernel),
            "blocks": "\n" + "\n".join(e.to_line() for e in spec.blocks),
        }
    return cfg


def dumps_spec(spec, header: str = "") -> str:
    buf = io.StringIO()
    for line in header.splitlines():
        buf.write(f"# {line}\n".replace("# \n", "#\n"))
    _spec_to_config(spec).write(buf)
    return buf.getvalue()


def save_spec(spec, path, header: str = "") -> None:
    Path(path).write_text(dumps_spec(spec, header))


def spec_from_mapping(section) -> Union[NetworkSpec, OriginalUNetSpec]:
    try:
        kind = section.get("kind", "base")
        if kind == "original":
            return OriginalUNetSpec(
                in_channels=int(section.get("in_channels", 1)),
                num_classes=int(section.get("num_classes", 2)),
                base_width=int(section.get("base_width", 32)),
                depth=int(section.get("depth", 4)),
                up_kernel=int(section.get("up_kernel", 4)),
                head_kernel=int(section.get("head_kernel", 3)),
                name=section.get("name", "original-unet"),
            ).validate()
        if kind != "base":
            raise ConfigurationError(f"unknown network kind {kind!r}")
        lines = [ln.strip() for ln in section["blocks"].splitlines() if ln.strip()]
        return NetworkSpec(
            blocks=[BlockEntry.from_line(ln) for ln in lines],
            in_channels=int(section.get("in_channels", 1)),
            out_channels=int(section.get("out_channels", 1)),
            skip_connections=section.get("skip_connections", "true").lower() in ("1", "true", "yes"),
            head_kernel=int(section.get("head_kernel", 1)),
            name=section.get("name", "base-unet"),
        ).validate()
    except (KeyError, ValueError, StopIteration) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed network section: {exc}") from exc


def loads_spec(text: str):
    cfg = configparser.ConfigParser()
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse network spec: {exc}") from exc
    if "network" not in cfg:
        raise ConfigurationError("network spec has no [network] section")
    return spec_from_mapping(cfg["network"])


def load_spec(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"network spec {path} does not exist")
    return loads_spec(path.read_text())


BUILTIN_SPECS = {"base": "base_unet.ini", "original": "original_unet.ini", "desk": "desk_unet.ini"}


def resolve_spec(name_or_path):
    """Load a spec by builtin name (``base``, ``original``, ``desk``) or file path."""
    if str(name_or_path) in BUILTIN_SPECS:
        return load_spec(Path(__file__).parent / "configs" / BUILTIN_SPECS[str(name_or_path)])
    return load_spec(name_or_path)
