"""Synthetic RGB-D activity videos.

Every class is a bright rectangle (the performer) following a class-specific
motion, plus small low-intensity noise blobs that jitter from frame to frame
and, optionally, a small secondary mover.  Depth frames encode proximity to
the camera as intensity.  ``punch``/``point`` and ``approach``/``retreat``
produce identical RGB motion and differ only in depth.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .frame_io import (DatasetManifest, Frame, FrameSequence, ManifestEntry, Modality,
                       save_sequence, write_manifest)

CLASSES = ("sweep_right", "sweep_down", "diagonal", "punch", "point", "approach", "retreat")
DEBUG_CLASSES = ("static",)
DEPTH_PAIRS = (("punch", "point"), ("approach", "retreat"))

BG_DEPTH = 0.15


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 7
    videos_per_class: int = 20
    height: int = 32
    width: int = 32
    frames: int = 12
    noise_blobs: int = 6
    blob_size: tuple[int, int] = (1, 2)
    blob_intensity: tuple[float, float] = (0.08, 0.2)
    distractor: bool = True
    seed: int = 42
    classes: tuple[str, ...] | None = None

    def __post_init__(self):
        if min(self.num_classes, self.videos_per_class, self.height, self.width, self.frames) < 1:
            raise ValueError("synth counts must be positive")
        if self.height < 8 or self.width < 8:
            raise ValueError("frames must be at least 8x8")
        names = self.class_names
        if len(set(names)) != len(names):
            raise ValueError("duplicate class names")
        unknown = set(names) - set(CLASSES) - set(DEBUG_CLASSES)
        if unknown:
            raise ValueError(f"unknown synthetic classes: {sorted(unknown)}")

    @property
    def class_names(self) -> tuple[str, ...]:
        if self.classes is not None:
            return tuple(self.classes)
        if self.num_classes > len(CLASSES):
            raise ValueError(f"at most {len(CLASSES)} built-in classes")
        return CLASSES[: self.num_classes]


def _box(canvas, y, x, h, w, value):
    H, W = canvas.shape[:2]
    y0, x0 = max(int(round(y)), 0), max(int(round(x)), 0)
    y1, x1 = min(int(round(y + h)), H), min(int(round(x + w)), W)
    if y1 > y0 and x1 > x0:
        canvas[y0:y1, x0:x1] = value


def _trajectory(cls, T, H, W, rng):
    """Per-frame (y, x, h, w, proximity) of the performer."""
    h = int(rng.integers(H // 4, H // 4 + 3))
    w = int(rng.integers(W // 4, W // 4 + 3))
    travel_x, travel_y = W / 3.0, H / 3.0
    y0 = rng.uniform(H / 8, H - h - travel_y - H / 8) if cls in ("sweep_down", "diagonal") \
        else rng.uniform(H / 4, H - h - H / 4)
    x0 = rng.uniform(W / 8, W - w - travel_x - W / 8) if cls in ("sweep_right", "diagonal", "punch", "point") \
        else rng.uniform(W / 4, W - w - W / 4)
    s = np.linspace(0.0, 1.0, T)
    near = rng.uniform(0.55, 0.65)
    out = []
    for k in range(T):
        y, x, hh, ww, prox = y0, x0, h, w, near
        if cls == "sweep_right":
            x = x0 + travel_x * s[k]
        elif cls == "sweep_down":
            y = y0 + travel_y * s[k]
        elif cls == "diagonal":
            x = x0 + travel_x * s[k]
            y = y0 + travel_y * s[k]
        elif cls in ("punch", "point"):
            # arm extends to the right; a punch also closes in on the camera
            ww = w + travel_x * s[k]
            hh = max(2, h // 2)
            if cls == "punch":
                prox = 0.35 + 0.55 * s[k]
        elif cls == "approach":
            prox = 0.3 + 0.6 * s[k]
        elif cls == "retreat":
            prox = 0.9 - 0.6 * s[k]
        out.append((y, x, hh, ww, prox))
    return out


def render_video(cls: str, cfg: SynthConfig, rng: np.random.Generator):
    """Draw one video; returns float arrays rgb (T, H, W, 3) and depth (T, H, W, 1)."""
    T, H, W = cfg.frames, cfg.height, cfg.width
    static = cls == "static"
    bg_rgb = rng.uniform(0.05, 0.15, size=3)
    color = rng.uniform(0.7, 1.0, size=3)
    path = _trajectory("static" if static else cls, T, H, W, rng)

    blobs = []
    for _ in range(cfg.noise_blobs):
        size = int(rng.integers(cfg.blob_size[0], cfg.blob_size[1] + 1))
        blobs.append((rng.uniform(0, H - size), rng.uniform(0, W - size), size,
                      rng.uniform(*cfg.blob_intensity)))
    jitter = rng.integers(-1, 2, size=(T, len(blobs), 2))

    distractor = None
    if cfg.distractor and not static:
        d_start = rng.uniform([0, 0], [H - 3, W - 3])
        d_vel = rng.uniform(-0.4, 0.4, size=2) * min(H, W) / T
        distractor = (d_start, d_vel, rng.uniform(0.35, 0.5))

    rgb = np.empty((T, H, W, 3))
    depth = np.empty((T, H, W, 1))
    for k in range(T):
        rf = np.broadcast_to(bg_rgb, (H, W, 3)).copy()
        df = np.full((H, W, 1), BG_DEPTH)
        for j, (by, bx, size, amp) in enumerate(blobs):
            dy, dx = (0, 0) if static else jitter[k, j]
            _box(rf, by + dy, bx + dx, size, size, np.clip(bg_rgb + amp, 0, 1))
            _box(df, by + dy, bx + dx, size, size, BG_DEPTH + amp / 2)
        if distractor is not None:
            start, vel, amp = distractor
            pos = np.clip(start + vel * k, 0, [H - 3, W - 3])
            _box(rf, pos[0], pos[1], 3, 3, amp)
            _box(df, pos[0], pos[1], 3, 3, BG_DEPTH + 0.1)
        y, x, hh, ww, prox = path[k]
        _box(rf, y, x, hh, ww, color)
        _box(df, y, x, hh, ww, prox)
        rgb[k], depth[k] = rf, df
    # quantize exactly as the on-disk formats will
    rgb = np.rint(rgb * 255.0) / 255.0
    depth = np.rint(depth * 65535.0) / 65535.0
    return rgb, depth


def make_sequences(rgb: np.ndarray, depth: np.ndarray):
    return (FrameSequence(Modality.RGB, tuple(Frame(f) for f in rgb)),
            FrameSequence(Modality.DEPTH, tuple(Frame(f) for f in depth)))


def synth_generate(cfg: SynthConfig, out_dir) -> DatasetManifest:
    """Render the whole dataset under ``out_dir`` and write ``manifest.json``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"unwritable output directory {out_dir}: {exc}") from exc

    rng = np.random.default_rng(cfg.seed)
    entries = []
    for cls in cfg.class_names:
        for i in range(cfg.videos_per_class):
            vid = f"{cls}_{i:03d}"
            rgb, depth = render_video(cls, cfg, rng)
            rgb_seq, depth_seq = make_sequences(rgb, depth)
            vdir = out_dir / "videos" / vid
            save_sequence(rgb_seq, vdir / "rgb")
            save_sequence(depth_seq, vdir / "depth")
            entries.append(ManifestEntry(vid, cls, vdir / "rgb", vdir / "depth"))
    manifest = DatasetManifest(tuple(entries))
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest
