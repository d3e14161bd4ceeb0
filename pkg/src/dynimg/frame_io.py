"""Frame sequence and dataset manifest I/O.

Frames live on disk as ``frame_%06d.png`` (8-bit RGB) or ``frame_%06d.png`` /
``.pgm`` (16-bit single-channel depth).  Everything is normalized to [0, 1] at
load time so the downstream math never sees raw sensor units.
"""
from __future__ import annotations

import enum
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

FRAME_RE = re.compile(r"^frame_(\d{6})\.(png|pgm)$")

RGB_SCALE = 255.0
DEPTH_SCALE = 65535.0


class Modality(enum.IntEnum):
    RGB = 0
    DEPTH = 1

    @property
    def channels(self) -> int:
        return 3 if self is Modality.RGB else 1


@dataclass(frozen=True)
class Frame:
    """One image as an (H, W, C) float64 array with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise DataError(f"frame must be HxWx1 or HxWx3, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
            raise DataError("frame values must lie in [0, 1]")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FrameSequence:
    modality: Modality
    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise DataError("zero frames")
        shape = frames[0].shape
        for f in frames:
            if f.shape != shape:
                raise DataError(f"inconsistent dimensions: {f.shape} vs {shape}")
        if shape[2] != self.modality.channels:
            raise DataError(
                f"{self.modality.name} sequence needs {self.modality.channels} channel(s), got {shape[2]}"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames[0].shape

    def as_array(self) -> np.ndarray:
        """Stacked (T, H, W, C) view of the sequence."""
        return np.stack([f.data for f in self.frames])

    def __eq__(self, other):
        if not isinstance(other, FrameSequence):
            return NotImplemented
        return (
            self.modality == other.modality
            and self.T == other.T
            and all(np.array_equal(a.data, b.data) for a, b in zip(self.frames, other.frames))
        )


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    label: str
    rgb_dir: Path
    depth_dir: Path


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    @property
    def labels(self) -> list[str]:
        """Sorted distinct class names; class index == position in this list."""
        return sorted({e.label for e in self.entries})

    def __len__(self):
        return len(self.entries)


def _frame_files(directory: Path) -> list[Path]:
    indexed = []
    for name in os.listdir(directory):
        m = FRAME_RE.match(name)
        if m:
            indexed.append((int(m.group(1)), name))
    indexed.sort()
    return [directory / name for _, name in indexed]


def _read_frame(path: Path, modality: Modality) -> np.ndarray:
    with Image.open(path) as im:
        mode = im.mode
        arr = np.array(im)
    if modality is Modality.RGB:
        if mode != "RGB":
            raise DataError(f"{path.name}: wrong bit depth for RGB (mode {mode}, expected 8-bit RGB)")
        return arr.astype(np.float64) / RGB_SCALE
    if mode.startswith("I;16"):
        return arr.astype(np.float64)[:, :, None] / DEPTH_SCALE
    if mode == "I":
        # 16-bit PGM decodes to 32-bit ints
        if arr.min() < 0 or arr.max() > 65535:
            raise DataError(f"{path.name}: depth values outside 16-bit range")
        return arr.astype(np.float64)[:, :, None] / DEPTH_SCALE
    raise DataError(f"{path.name}: wrong bit depth for DEPTH (mode {mode}, expected 16-bit grayscale)")


def load_sequence(directory, modality: Modality) -> FrameSequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"missing directory: {directory}")
    files = _frame_files(directory)
    if not files:
        raise DataError(f"zero frames in {directory}")
    frames = []
    shape = None
    for path in files:
        data = _read_frame(path, modality)
        if shape is None:
            shape = data.shape
        elif data.shape != shape:
            raise DataError(f"inconsistent dimensions in {directory}: {data.shape} vs {shape}")
        frames.append(Frame(data))
    return FrameSequence(modality, tuple(frames))


def save_sequence(seq: FrameSequence, directory) -> None:
    """Write ``seq`` as numbered PNGs; reloading reproduces the values exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        path = directory / f"frame_{i:06d}.png"
        if seq.modality is Modality.RGB:
            raw = np.rint(frame.data * RGB_SCALE).astype(np.uint8)
            Image.fromarray(raw).save(path)
        else:
            raw = np.rint(frame.data[:, :, 0] * DEPTH_SCALE).astype(np.uint16)
            Image.fromarray(raw).save(path)


def count_frames(directory) -> int:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"missing directory: {directory}")
    return len(_frame_files(directory))


def load_manifest(path) -> DatasetManifest:
    """Parse and eagerly validate a JSON manifest.

    Relative ``rgb_dir``/``depth_dir`` paths resolve against the manifest's
    own directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise DataError("manifest must be a JSON array")

    base = path.parent
    entries = []
    seen = set()
    for item in raw:
        if not isinstance(item, dict) or not {"video_id", "label", "rgb_dir", "depth_dir"} <= item.keys():
            raise DataError(f"malformed manifest entry: {item!r}")
        vid = str(item["video_id"])
        if vid in seen:
            raise DataError(f"duplicate id: {vid}")
        seen.add(vid)
        rgb_dir = base / item["rgb_dir"]
        depth_dir = base / item["depth_dir"]
        n_rgb = count_frames(rgb_dir)
        n_depth = count_frames(depth_dir)
        if n_rgb == 0 or n_depth == 0:
            raise DataError(f"{vid}: empty frame directory")
        if n_rgb != n_depth:
            raise DataError(f"{vid}: modality length mismatch (rgb {n_rgb}, depth {n_depth})")
        entries.append(ManifestEntry(vid, str(item["label"]), rgb_dir, depth_dir))
    return DatasetManifest(tuple(entries))


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    items = []
    for e in manifest.entries:
        items.append({
            "video_id": e.video_id,
            "label": e.label,
            "rgb_dir": os.path.relpath(Path(e.rgb_dir).resolve(), base),
            "depth_dir": os.path.relpath(Path(e.depth_dir).resolve(), base),
        })
    path.write_text(json.dumps(items, indent=2) + "\n")
