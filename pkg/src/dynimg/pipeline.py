"""End-to-end pipeline: load -> pool -> prune -> embed/fuse -> classify -> report."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import dimg, fusion, gestalt
from .errors import DataError
from .frame_io import DatasetManifest, FrameSequence, ManifestEntry, Modality, load_sequence
from .rank_pooling import DynamicImage, PoolingInput, SolverConfig, dynamic_image, normalize_image, with_values

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    pooling: str = "approx"  # "approx" | "exact"
    pooling_input: str = "raw"  # "raw" | "averaged"
    tau_b: float = 0.05
    delta: int = 100
    epsilon: float = 1.0
    prune: bool = True
    embed_h: int = 32
    embed_w: int = 32
    mask_rgb_with_depth: bool = False
    streams: str = "rgb+depth"  # "rgb+depth" | "rgb" | "depth"
    split: float = 0.7
    seed: int = 42
    workers: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    train: fusion.TrainConfig = field(default_factory=fusion.TrainConfig)

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        if self.pooling not in ("approx", "exact"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.pooling_input not in ("raw", "averaged"):
            raise ValueError(f"unknown pooling input {self.pooling_input!r}")
        if self.streams not in ("rgb+depth", "rgb", "depth"):
            raise ValueError(f"unknown streams {self.streams!r}")
        if self.delta < 2 or self.workers < 1:
            raise ValueError("delta must be >= 2 and workers >= 1")

    @property
    def pooling_mode(self) -> PoolingInput:
        return PoolingInput(self.pooling_input)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        if isinstance(kw.get("solver"), dict):
            kw["solver"] = SolverConfig(**kw["solver"])
        if isinstance(kw.get("train"), dict):
            kw["train"] = fusion.TrainConfig(**kw["train"])
        return cls(**kw)

    def merged(self, overrides: dict) -> "PipelineConfig":
        """Copy with top-level keys replaced and nested dicts merged."""
        base = self.to_dict()
        for key, value in overrides.items():
            if key in ("solver", "train") and isinstance(value, dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        return PipelineConfig.from_dict(base)


@dataclass
class EvalReport:
    class_names: list[str]
    confusion: np.ndarray  # rows = true, columns = predicted
    config: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        total = int(self.confusion.sum())
        return float(np.trace(self.confusion)) / total if total else 0.0

    def per_class(self) -> dict:
        out = {}
        C = self.confusion
        for k, name in enumerate(self.class_names):
            tp = int(C[k, k])
            predicted, support = int(C[:, k].sum()), int(C[k, :].sum())
            out[name] = {
                "precision": tp / predicted if predicted else 0.0,
                "recall": tp / support if support else 0.0,
                "support": support,
            }
        return out

    def pair_accuracy(self, a: str, b: str) -> float:
        """Fraction of test videos of classes ``a`` and ``b`` labelled correctly."""
        idx = [self.class_names.index(a), self.class_names.index(b)]
        total = sum(int(self.confusion[i].sum()) for i in idx)
        return sum(int(self.confusion[i, i]) for i in idx) / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "class_names": list(self.class_names),
            "per_class": self.per_class(),
            "confusion": self.confusion.astype(int).tolist(),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(list(data["class_names"]), np.asarray(data["confusion"], dtype=int), data.get("config", {}))

    def table(self) -> str:
        """Aligned confusion-matrix table: rows true class, columns predicted."""
        names = self.class_names
        width = max(len("Activities"), *(len(n) for n in names))
        cell = max(3, *(len(n) for n in names), len(str(int(self.confusion.max(initial=0)))))
        lines = ["Activities".ljust(width) + " | " + " | ".join(n.rjust(cell) for n in names)]
        lines.append("-" * len(lines[0]))
        for k, name in enumerate(names):
            row = " | ".join(str(int(v)).rjust(cell) for v in self.confusion[k])
            lines.append(name.ljust(width) + " | " + row)
        lines.append("")
        lines.append(f"accuracy: {self.accuracy:.4f}")
        return "\n".join(lines) + "\n"


def confusion_matrix(y_true, y_pred, K: int) -> np.ndarray:
    C = np.zeros((K, K), dtype=int)
    np.add.at(C, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return C


def stratified_split(labels, fraction: float, rng: np.random.Generator):
    """Per-class random split; each class puts round(fraction * count) videos in train."""
    labels = np.asarray(labels)
    train, test = [], []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            raise DataError(f"class {cls!r} has fewer than 2 videos")
        n_train = int(np.floor(fraction * len(idx) + 0.5))
        n_train = min(max(n_train, 1), len(idx) - 1)
        perm = idx[rng.permutation(len(idx))]
        train.extend(perm[:n_train].tolist())
        test.extend(perm[n_train:].tolist())
    return sorted(train), sorted(test)


def extract_sequences(rgb: FrameSequence, depth: FrameSequence, config: PipelineConfig):
    """Raw (pre-normalization) dynamic images for both modalities."""
    if rgb.T != depth.T:
        raise DataError(f"modality length mismatch (rgb {rgb.T}, depth {depth.T})")
    if rgb.shape[:2] != depth.shape[:2]:
        raise DataError("rgb and depth frames must be registered to the same size")
    exact = config.pooling == "exact"
    return (dynamic_image(rgb, exact, config.pooling_mode, config.solver),
            dynamic_image(depth, exact, config.pooling_mode, config.solver))


def run_extract(entry: ManifestEntry, config: PipelineConfig, out_dir=None, stem: str | None = None):
    """Both normalized dynamic images of one video; optionally persisted.

    Persisting writes ``<stem>_rgb.dimg``/``<stem>_depth.dimg`` (raw values)
    plus PNG previews of the normalized images.
    """
    rgb_seq = load_sequence(entry.rgb_dir, Modality.RGB)
    depth_seq = load_sequence(entry.depth_dir, Modality.DEPTH)
    raw_rgb, raw_depth = extract_sequences(rgb_seq, depth_seq, config)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = entry.video_id if stem is None else stem
        prefix = f"{stem}_" if stem else ""
        for tag, img in (("rgb", raw_rgb), ("depth", raw_depth)):
            dimg.write_dimg(img, out_dir / f"{prefix}{tag}.dimg")
            dimg.save_preview(img, out_dir / f"{prefix}{tag}.png")
    return normalize_image(raw_rgb), normalize_image(raw_depth)


def prune_pair(rgb: DynamicImage, depth: DynamicImage, config: PipelineConfig):
    if not config.prune:
        return rgb, depth
    depth_out, dmap, dsweep = gestalt.prune_detailed(depth, config.tau_b, config.delta, config.epsilon)
    if config.mask_rgb_with_depth:
        keep = gestalt.kept_mask(dmap, dsweep)
        rgb_out = with_values(rgb, np.where(keep[:, :, None], rgb.values, rgb.rest_level))
    else:
        rgb_out = gestalt.prune(rgb, config.tau_b, config.delta, config.epsilon)
    return rgb_out, depth_out


def video_features(entry: ManifestEntry, config: PipelineConfig, dimg_dir=None):
    """Per-stream embeddings (rgb, depth) of one processed video."""
    rgb, depth = run_extract(entry, config, dimg_dir)
    rgb, depth = prune_pair(rgb, depth, config)
    return (fusion.embed(rgb, config.embed_h, config.embed_w),
            fusion.embed(depth, config.embed_h, config.embed_w))


def extract_features(manifest: DatasetManifest, config: PipelineConfig, dimg_dir=None):
    """Returns (rgb embeddings, depth embeddings, labels, class names)."""
    names = manifest.labels
    y = np.array([names.index(e.label) for e in manifest.entries], dtype=int)

    def work(entry):
        return video_features(entry, config, dimg_dir)

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            feats = list(pool.map(work, manifest.entries))
    else:
        feats = [work(e) for e in manifest.entries]
    E_rgb = np.stack([f[0] for f in feats])
    E_depth = np.stack([f[1] for f in feats])
    return E_rgb, E_depth, y, names


def stream_matrix(E_rgb, E_depth, streams: str) -> np.ndarray:
    if streams == "rgb":
        return E_rgb
    if streams == "depth":
        return E_depth
    return np.stack([fusion.fuse(a, b) for a, b in zip(E_rgb, E_depth)])


def split_for(manifest: DatasetManifest, config: PipelineConfig):
    labels = [e.label for e in manifest.entries]
    return stratified_split(labels, config.split, np.random.default_rng(config.seed))


def fit_and_evaluate(X, y, names, train_idx, test_idx, config: PipelineConfig):
    params, losses = fusion.train(X[train_idx], y[train_idx], config.train, len(names))
    pred = fusion.predict_batch(params, X[test_idx])
    C = confusion_matrix(y[test_idx], pred, len(names))
    return params, losses, EvalReport(list(names), C, config.to_dict())


def check_manifest(manifest: DatasetManifest):
    counts = {}
    for e in manifest.entries:
        counts[e.label] = counts.get(e.label, 0) + 1
    small = sorted(k for k, v in counts.items() if v < 2)
    if small:
        raise DataError(f"classes with fewer than 2 videos: {small}")


def run_pipeline(manifest: DatasetManifest, config: PipelineConfig, out_dir=None) -> EvalReport:
    """Extract, prune, embed, split, train, evaluate; optionally write outputs.

    Outputs under ``out_dir``: ``dimg/`` (per-video dynamic images),
    ``report.json``, ``confusion.txt``, ``model.json``.
    """
    check_manifest(manifest)
    out_dir = Path(out_dir) if out_dir is not None else None
    log.info("resolved config: %s", json.dumps(config.to_dict(), sort_keys=True))
    E_rgb, E_depth, y, names = extract_features(manifest, config, out_dir / "dimg" if out_dir else None)
    X = stream_matrix(E_rgb, E_depth, config.streams)
    train_idx, test_idx = split_for(manifest, config)
    params, losses, report = fit_and_evaluate(X, y, names, train_idx, test_idx, config)
    log.info("final training loss %.6f, test accuracy %.4f", losses[-1], report.accuracy)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json())
        (out_dir / "confusion.txt").write_text(report.table())
        save_model(params, config, out_dir / "model.json", names,
                   [manifest.entries[i].video_id for i in test_idx])
    return report


def save_model(params, config: PipelineConfig, path, names, test_ids):
    fusion.save_model(params, config.train, path, names)
    data = json.loads(Path(path).read_text())
    data["pipeline_config"] = config.to_dict()
    data["test_ids"] = list(test_ids)
    Path(path).write_text(json.dumps(data))
