"""Command line entry point: ``bsunet <subcommand> ...``.

Exit codes: 0 success, 1 user error (bad flags, missing files, invalid
configuration), 2 runtime failure (training divergence, unexpected errors).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .blocks import count_parameters
from .data import (
    CtVolume, filter_liver_slices, load_nifti, make_samples,
    make_tumor_samples, preprocess_hu, save_nifti,
)
from .data.cache import cache_root, read_stage, write_cache
from .data.slicing import foreground_mask
from .data.synthetic import write_synthetic_dataset
from .errors import BSUNetError, ConfigurationError, TrainingError
from .metrics import COLUMNS, bundle_row, evaluate_case, summarize
from .networks import NetworkSpec, build_network, parameter_table, resolve_spec
from .trainer import (
    TrainConfig, cascade_predict, load_checkpoint, predict_volume, read_loss_csv, train_base_unet,
    train_encoding_unet, train_segmentation_unet,
)
from .weightmap import WeightMapParams, compute_weight_map, to_preview

log = logging.getLogger("bsunet")

DATA_ROOT_ENV = "BSUNET_DATA_ROOT"
CONFIG_DIR = Path(__file__).parent / "configs"
STREAMS = ("dice", "euclidean")


class UserError(BSUNetError):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- configuration -------------------------------------------------------------


def load_config(path=None) -> configparser.ConfigParser:
    """Packaged defaults, overlaid with ``path`` (a file or a builtin name such as ``smoke``)."""
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";",))
    cfg.read(CONFIG_DIR / "defaults.ini")
    if path:
        p = Path(path)
        if not p.is_file() and (CONFIG_DIR / f"{path}.ini").is_file():
            p = CONFIG_DIR / f"{path}.ini"
        if not p.is_file():
            raise UserError(f"config file {path} not found")
        cfg.read(p)
    return cfg


def train_config(cfg, stage: str, section: str = "train", overrides: Optional[dict] = None) -> TrainConfig:
    values = dict(cfg["train"])
    if section != "train" and cfg.has_section(section):
        values.update({k: v for k, v in cfg[section].items() if v != ""})
    batch = values.pop(f"{stage}_batch_size", None)
    values.pop("liver_batch_size", None)
    values.pop("tumor_batch_size", None)
    if batch is not None:
        values["batch_size"] = batch
    wm = cfg["weightmap"]
    values.update(wm_w=wm.get("w"), wm_sigma=wm.get("sigma"), roi=wm.get("roi"),
                  exponent=wm.get("exponent"), channels=cfg["data"].get("channels"), stage=stage)
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return TrainConfig.from_mapping(values)


def network_spec(cfg, channels: int, name=None) -> NetworkSpec:
    spec = resolve_spec(name or cfg["network"]["spec"])
    if not isinstance(spec, NetworkSpec):
        raise UserError("bottleneck-supervised training needs a base U-Net spec")
    return spec if spec.in_channels == channels else spec.with_input_channels(channels)


def data_root(arg) -> Path:
    root = arg or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise UserError(f"no data root: pass --data-root or set {DATA_ROOT_ENV}")
    root = Path(root)
    if not (root / "volumes").is_dir():
        raise UserError(f"{root} has no volumes/ directory")
    return root


def volume_paths(path) -> List[Path]:
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise UserError(f"{path} does not exist")
    files = sorted(p for p in path.iterdir() if p.name.endswith((".nii", ".nii.gz")))
    if not files:
        raise UserError(f"no NIfTI volumes in {path}")
    return files


def _volume255(vol: CtVolume, cfg) -> np.ndarray:
    return preprocess_hu(vol.voxels, cfg["data"].getboolean("fixed_bounds"))


# -- subcommands -----------------------------------------------------------------


def cmd_make_synthetic(args, cfg):
    ids = write_synthetic_dataset(args.out, args.n, tuple(args.shape), args.seed)
    print(f"wrote {len(ids)} volumes to {args.out}")


def preprocess_volumes(root: Path, cache: Path, stage: str, cfg) -> List[Path]:
    channels = cfg["data"].getint("channels")
    wm = WeightMapParams(cfg["weightmap"].getfloat("w"), cfg["weightmap"].getfloat("sigma"),
                         exponent=cfg["weightmap"]["exponent"])
    written = []
    for vpath in volume_paths(root / "volumes"):
        vol = load_nifti(vpath)
        lpath = root / "labels" / vpath.name
        if not lpath.is_file():
            raise UserError(f"missing label volume {lpath}")
        labels = load_nifti(lpath, dtype=np.uint8).voxels
        v255 = _volume255(vol, cfg)
        if stage == "liver":
            samples = filter_liver_slices(make_samples(
                v255, labels, channels, cfg["data"]["target"], wm, cfg["weightmap"]["roi"],
                vol.identifier))
        else:
            samples = make_tumor_samples(v255, labels, channels, cfg["data"].getint("tumor_size"), wm,
                                         vol.identifier)
        written.append(write_cache(cache, stage, vol.identifier, channels, samples))
        log.info("%s: %d %s samples", vol.identifier, len(samples), stage)
    return written


def cmd_preprocess(args, cfg):
    _apply_data_flags(args, cfg)
    paths = preprocess_volumes(data_root(args.data_root), cache_root(args.cache), args.stage, cfg)
    print(f"cached {len(paths)} volumes for the {args.stage} stage")


def cmd_weightmap(args, cfg):
    lab = load_nifti(args.labels, dtype=np.uint8)
    mask = foreground_mask(lab.voxels, args.target)
    tumor = foreground_mask(lab.voxels, "tumor")
    out = np.zeros(mask.shape, np.float32)
    for k in range(mask.shape[-1]):
        roi = tumor[:, :, k] if args.roi == "tumor" else None
        params = WeightMapParams(args.w, args.sigma, roi, args.exponent)
        out[:, :, k] = compute_weight_map(mask[:, :, k], params)
    save_nifti(CtVolume(out, lab.spacing, lab.affine, lab.identifier), args.out)
    if args.preview_dir:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        d = Path(args.preview_dir)
        d.mkdir(parents=True, exist_ok=True)
        for k in range(out.shape[-1]):
            if mask[:, :, k].any():
                plt.imsave(d / f"{lab.identifier}_{k:04d}.png", to_preview(out[:, :, k]), cmap="gray",
                           vmin=0, vmax=255)
    print(f"wrote {args.out}")


def _train_overrides(args) -> dict:
    return {"epochs": args.epochs, "lr": args.lr, "max_iterations": args.max_iterations,
            "seed": args.seed, "batch_size": args.batch_size}


def _samples(args, cfg):
    samples = read_stage(cache_root(args.cache), args.stage, cfg["data"].getint("channels"))
    if not samples:
        raise UserError(f"no cached {args.stage} samples; run preprocess first")
    return samples


def cmd_train_encoder(args, cfg):
    _apply_data_flags(args, cfg)
    samples = _samples(args, cfg)
    run = Path(args.run_dir)
    conf = train_config(cfg, args.stage, "encoder", _train_overrides(args))
    spec = network_spec(cfg, conf.channels, args.spec)
    st = train_encoding_unet(samples, spec, conf, run / "encoder_loss.csv", run / "encoder.pt")
    print(f"encoder: {st.iteration} iterations, final dice loss {st.history[-1]['dice']:.4f}")


def cmd_train_seg(args, cfg):
    _apply_data_flags(args, cfg)
    samples = _samples(args, cfg)
    run = Path(args.run_dir)
    conf = train_config(cfg, args.stage, "train", {**_train_overrides(args), "w1": args.w1, "w2": args.w2})
    spec = network_spec(cfg, conf.channels, args.spec)
    if args.baseline:
        st = train_base_unet(samples, spec, conf, run / "base_loss.csv", run / "base.pt")
    else:
        if not args.encoder:
            raise UserError("train-seg needs --encoder (or --baseline)")
        encoder = load_checkpoint(args.encoder)
        st = train_segmentation_unet(samples, encoder, spec, conf, run / "seg_loss.csv", run / "segmenter.pt")
    print(f"segmenter: {st.iteration} iterations, final loss {st.history[-1]['total']:.4f}")


def _save_like(arr, ref: CtVolume, path):
    save_nifti(CtVolume(arr.astype(np.uint8), ref.spacing, ref.affine, ref.identifier), path, np.uint8)


def cmd_predict(args, cfg):
    _apply_data_flags(args, cfg)
    model = load_checkpoint(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    channels = model.spec.in_channels
    for vpath in volume_paths(args.volumes):
        vol = load_nifti(vpath)
        pred = predict_volume(model, _volume255(vol, cfg), channels, cfg["data"]["boundary"])
        _save_like(pred, vol, out / vpath.name)
        print(f"{vol.identifier}: {int(pred.sum())} foreground voxels")


def cmd_cascade_predict(args, cfg):
    _apply_data_flags(args, cfg)
    liver, tumor = load_checkpoint(args.liver_model), load_checkpoint(args.tumor_model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for vpath in volume_paths(args.volumes):
        vol = load_nifti(vpath)
        labels = cascade_predict(liver, tumor, _volume255(vol, cfg), liver.spec.in_channels,
                                 tumor.spec.in_channels, cfg["data"].getint("tumor_size"),
                                 cfg["data"]["boundary"])
        _save_like(labels, vol, out / vpath.name)
        print(f"{vol.identifier}: liver {int((labels >= 1).sum())}, tumor {int((labels == 2).sum())} voxels")


def evaluate_dirs(pred_dir, truth_dir, label: int, out_csv=None) -> Dict[str, float]:
    rows, bundles = [], []
    for ppath in volume_paths(pred_dir):
        tpath = Path(truth_dir) / ppath.name
        if not tpath.is_file():
            raise UserError(f"no ground truth for {ppath.name} in {truth_dir}")
        pred, truth = load_nifti(ppath, np.uint8), load_nifti(tpath, np.uint8)
        sel = (lambda v: v >= 1) if label == 1 else (lambda v: v == 2)
        b = evaluate_case(sel(pred.voxels), sel(truth.voxels), truth.spacing)
        bundles.append(b)
        rows.append(bundle_row(truth.identifier, b))
    summary = summarize(bundles)
    header = ["case", "DPC", "VOE", "RVD", "ASSD", "MSD", "RSSD"]
    lines = [header] + rows
    if out_csv:
        Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerows(lines)
            w.writerow([])
            w.writerow(["summary", *COLUMNS])
            w.writerow(["", *(summary[c] for c in COLUMNS)])
    return summary


def _format_summary(summary) -> str:
    head = " ".join(f"{c:>8}" for c in COLUMNS)
    vals = " ".join(f"{summary[c]:8.4f}" for c in COLUMNS)
    dropped = {c: summary[f"{c}_excluded"] for c in COLUMNS[2:] if summary[f"{c}_excluded"]}
    extra = f"\nexcluded undefined cases: {dropped}" if dropped else ""
    return f"{head}\n{vals}{extra}"


def cmd_evaluate(args, cfg):
    summary = evaluate_dirs(args.pred, args.truth, args.label, args.out)
    print(_format_summary(summary))


def cmd_params(args, cfg):
    try:
        spec = resolve_spec(args.spec)
    except ConfigurationError as exc:
        raise UserError(str(exc)) from exc
    net = build_network(spec)
    rows = parameter_table(net)
    width = max(len(n) for n, _ in rows)
    for name, n in rows:
        print(f"{name:<{width}}  {n:>10,}")
    total = count_parameters(net)
    print(f"{'total':<{width}}  {total:>10,}")
    if args.expect is not None and total != args.expect:
        print(f"expected {args.expect:,} parameters, got {total:,}", file=sys.stderr)
        return 1
    return 0


def smooth(values, factor: float = 0.9) -> List[float]:
    """Exponential moving average; ``factor=0`` returns the raw series."""
    out, prev = [], None
    for v in values:
        prev = v if prev is None else factor * prev + (1 - factor) * v
        out.append(prev)
    return out


def plot_losses(run_dir, factor: float = 0.9, out_dir=None) -> List[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    csvs = sorted(run_dir.glob("*loss*.csv"))
    if not csvs:
        raise UserError(f"no loss CSVs in {run_dir}")
    out_dir = Path(out_dir or run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in csvs:
        rows = read_loss_csv(path)
        if not rows:
            raise UserError(f"{path} is empty")
        for stream in STREAMS:
            pts = [(r["iteration"], r[stream]) for r in rows if r.get(stream) is not None]
            if not pts:
                continue
            it, raw = zip(*pts)
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(it, raw, alpha=0.3, label="raw")
            ax.plot(it, smooth(raw, factor), label=f"smoothed ({factor})")
            ax.set_xlabel("iteration")
            ax.set_ylabel(f"{stream} loss")
            ax.set_title(path.stem)
            ax.legend()
            target = out_dir / f"{path.stem}_{stream}.png"
            fig.savefig(target, dpi=100)
            plt.close(fig)
            written.append(target)
    return written


def cmd_plot_losses(args, cfg):
    for p in plot_losses(args.run_dir, args.smoothing, args.out):
        print(p)


# -- pipeline ------------------------------------------------------------------------


@dataclass
class RunManifest:
    run_id: str
    config: Dict[str, Dict[str, str]]
    version: str
    artifacts: Dict[str, str] = field(default_factory=dict)
    stages: List[str] = field(default_factory=list)
    started: float = 0.0
    finished: Optional[float] = None

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # not installed, e.g. running from a source checkout
        return "unknown"


def _stage_list(stage: str) -> List[str]:
    liver = ["liver-preprocess", "liver-encoder", "liver-seg", "liver-predict", "liver-evaluate"]
    tumor = ["tumor-preprocess", "tumor-encoder", "tumor-seg", "tumor-predict", "tumor-evaluate"]
    return liver if stage == "liver" else liver + tumor


def run_pipeline(root: Path, run_dir: Path, cfg, stage: str = "all", force: bool = False,
                 eval_root: Optional[Path] = None) -> RunManifest:
    """Preprocess, train both phases, predict and evaluate; resumable per stage.

    Stage completion is recorded as ``<run_dir>/stages/<name>.done``; reruns
    skip finished stages unless ``force``. Tumor stages run the liver stages
    first, since the cascade needs the liver model.
    """
    run_dir.mkdir(parents=True, exist_ok=True)
    marks = run_dir / "stages"
    marks.mkdir(exist_ok=True)
    manifest_path = run_dir / "manifest.json"
    stages = _stage_list(stage)
    if not force and manifest_path.is_file() and all((marks / f"{s}.done").is_file() for s in stages):
        log.info("all stages complete, nothing to do")
        return RunManifest.read(manifest_path)
    if force:
        for s in stages:
            (marks / f"{s}.done").unlink(missing_ok=True)
    cache = run_dir / "cache"
    eval_root = eval_root or root
    channels = cfg["data"].getint("channels")
    art = {
        "liver-encoder": run_dir / "liver" / "encoder.pt", "liver-seg": run_dir / "liver" / "segmenter.pt",
        "tumor-encoder": run_dir / "tumor" / "encoder.pt", "tumor-seg": run_dir / "tumor" / "segmenter.pt",
        "liver-predict": run_dir / "liver" / "predictions", "tumor-predict": run_dir / "tumor" / "predictions",
        "liver-evaluate": run_dir / "liver" / "metrics.csv", "tumor-evaluate": run_dir / "tumor" / "metrics.csv",
    }

    def run_stage(name: str):
        kind, step = name.split("-")
        conf = train_config(cfg, kind)
        spec = network_spec(cfg, channels)
        if step == "preprocess":
            preprocess_volumes(root, cache, kind, cfg)
        elif step == "encoder":
            enc_conf = train_config(cfg, kind, "encoder")
            train_encoding_unet(read_stage(cache, kind, channels), spec, enc_conf,
                                run_dir / kind / "encoder_loss.csv", art[name])
        elif step == "seg":
            samples = read_stage(cache, kind, channels)
            train_segmentation_unet(samples, load_checkpoint(art[f"{kind}-encoder"]), spec, conf,
                                    run_dir / kind / "seg_loss.csv", art[name])
        elif step == "predict":
            out = art[name]
            out.mkdir(parents=True, exist_ok=True)
            liver = load_checkpoint(art["liver-seg"])
            for vpath in volume_paths(eval_root / "volumes"):
                vol = load_nifti(vpath)
                v255 = _volume255(vol, cfg)
                if kind == "liver":
                    pred = predict_volume(liver, v255, channels, cfg["data"]["boundary"])
                else:
                    pred = cascade_predict(liver, load_checkpoint(art["tumor-seg"]), v255, channels,
                                           channels, cfg["data"].getint("tumor_size"), cfg["data"]["boundary"])
                _save_like(pred, vol, out / vpath.name)
        elif step == "evaluate":
            summary = evaluate_dirs(art[f"{kind}-predict"], eval_root / "labels", 1 if kind == "liver" else 2,
                                    art[name])
            (run_dir / kind / "summary.json").write_text(json.dumps(summary, indent=2))

    manifest = RunManifest(uuid.uuid4().hex[:12], {s: dict(cfg[s]) for s in cfg.sections()}, _version(),
                           started=time.time())
    for name in stages:
        done = marks / f"{name}.done"
        if done.is_file():
            log.info("skipping %s (done)", name)
        else:
            log.info("running %s", name)
            try:
                run_stage(name)
            except (UserError, ConfigurationError):
                raise
            except Exception as exc:
                raise TrainingError(f"stage {name} failed: {exc}") from exc
            done.write_text(json.dumps({"finished": time.time()}))
        manifest.stages.append(name)
    manifest.artifacts = {k: str(v) for k, v in art.items() if v.exists()}
    manifest.finished = time.time()
    manifest.write(manifest_path)
    return manifest


def cmd_pipeline(args, cfg):
    _apply_data_flags(args, cfg)
    m = run_pipeline(data_root(args.data_root), Path(args.run_dir), cfg, args.stage, args.force,
                     Path(args.eval_root) if args.eval_root else None)
    for kind in ("liver", "tumor"):
        s = Path(args.run_dir) / kind / "summary.json"
        if s.is_file() and f"{kind}-evaluate" in m.stages:
            print(kind)
            print(_format_summary(json.loads(s.read_text())))
    print(f"run {m.run_id} complete: {args.run_dir}")


# -- argument parsing -----------------------------------------------------------------


def _apply_data_flags(args, cfg):
    if getattr(args, "channels", None):
        cfg["data"]["channels"] = str(args.channels)
    if getattr(args, "fixed_bounds", False):
        cfg["data"]["fixed_bounds"] = "true"


def _add_data(p):
    p.add_argument("--channels", type=int, choices=(1, 3), help="1- or 3-channel slices (default: config)")
    p.add_argument("--fixed-bounds", action="store_true", help="fixed [-200, 250] HU to [0, 255] mapping")


def _add_train(p):
    p.add_argument("--stage", choices=("liver", "tumor"), default="liver")
    p.add_argument("--cache", help="sample cache root (default: $BSUNET_CACHE or ./cache)")
    p.add_argument("--run-dir", required=True, help="directory for checkpoints and loss CSVs")
    p.add_argument("--spec", help="network spec name or file (default: config)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--seed", type=int)
    _add_data(p)


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="bsunet", description="Bottleneck-supervised U-Net for liver and tumor CT segmentation.")
    parser.add_argument("--config", help="INI file (or builtin name) overriding the packaged defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("make-synthetic", help="write a small synthetic CT dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--shape", type=int, nargs=3, default=(64, 64, 12))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("preprocess", help="window, normalize and slice volumes into the cache")
    p.add_argument("--data-root", help=f"directory with volumes/ and labels/ (default: ${DATA_ROOT_ENV})")
    p.add_argument("--cache", help="cache root (default: $BSUNET_CACHE or ./cache)")
    p.add_argument("--stage", choices=("liver", "tumor"), default="liver")
    _add_data(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("weightmap", help="compute boundary weight maps for a label volume")
    p.add_argument("--labels", required=True, help="label volume (NIfTI)")
    p.add_argument("--out", required=True, help="output weight volume (NIfTI)")
    p.add_argument("--w", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=20.0)
    p.add_argument("--roi", choices=("none", "tumor"), default="none")
    p.add_argument("--target", choices=("liver", "liver_only", "tumor"), default="liver")
    p.add_argument("--exponent", choices=("linear", "squared"), default="linear")
    p.add_argument("--preview-dir", help="also write 8-bit PNG previews (W x 255)")
    p.set_defaults(func=cmd_weightmap)

    p = sub.add_parser("train-encoder", help="phase one: train the encoding U-Net on label maps")
    _add_train(p)
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("train-seg", help="phase two: bottleneck-supervised segmentation training")
    _add_train(p)
    p.add_argument("--encoder", help="encoder checkpoint from train-encoder")
    p.add_argument("--w1", type=float)
    p.add_argument("--w2", type=float)
    p.add_argument("--baseline", action="store_true", help="train the base U-Net without bottleneck supervision")
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("predict", help="slice-wise prediction of volumes")
    p.add_argument("--model", required=True)
    p.add_argument("--volumes", required=True, help="volume file or directory")
    p.add_argument("--out", required=True)
    _add_data(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cascade-predict", help="liver then tumor prediction, LiTS labels")
    p.add_argument("--liver-model", required=True)
    p.add_argument("--tumor-model", required=True)
    p.add_argument("--volumes", required=True)
    p.add_argument("--out", required=True)
    _add_data(p)
    p.set_defaults(func=cmd_cascade_predict)

    p = sub.add_parser("evaluate", help="DPC, DG, VOE, RVD, ASSD, MSD, RSSD against ground truth")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--truth", required=True, help="ground-truth label directory")
    p.add_argument("--label", type=int, choices=(1, 2), default=1, help="1 = liver, 2 = tumor")
    p.add_argument("--out", help="per-case CSV with a summary row")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", help="per-block and total trainable parameter counts")
    p.add_argument("spec", help="builtin spec (base, original, desk) or INI file")
    p.add_argument("--expect", type=int, help="exit 1 unless the total equals this")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("plot-losses", help="raw and smoothed loss curves from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--smoothing", type=float, default=0.9)
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=cmd_plot_losses)

    p = sub.add_parser("pipeline", help="preprocess, train, predict and evaluate in one resumable run")
    p.add_argument("--data-root", help=f"directory with volumes/ and labels/ (default: ${DATA_ROOT_ENV})")
    p.add_argument("--eval-root", help="evaluate on this dataset instead of the training data")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--stage", choices=("liver", "tumor", "all"), default="all",
                   help="liver only, or liver followed by the tumor cascade")
    p.add_argument("--force", action="store_true", help="rerun completed stages")
    _add_data(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        rc = args.func(args, cfg)
        return rc or 0
    except (UserError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"failed: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 2


if __name__ == "__main__":
    sys.exit(main())
