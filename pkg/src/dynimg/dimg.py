"""``.dimg`` binary container and PNG previews for dynamic images.

Layout (little-endian)::

    b"DIMG" | u32 height | u32 width | u32 channels | u32 modality
    | f32[height*width*channels] raw values, row-major, channel-interleaved
    | f64 min | f64 max
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .frame_io import Modality
from .rank_pooling import DynamicImage, denormalize, normalize_image

MAGIC = b"DIMG"
_HEADER = struct.Struct("<4sIIII")
_RANGE = struct.Struct("<dd")


def encode(img: DynamicImage) -> bytes:
    raw = denormalize(img)
    h, w, c = raw.values.shape
    body = raw.values.astype("<f4").tobytes(order="C")
    lo, hi = raw.value_range
    return _HEADER.pack(MAGIC, h, w, c, int(raw.modality)) + body + _RANGE.pack(lo, hi)


def decode(buf: bytes) -> DynamicImage:
    if len(buf) < _HEADER.size + _RANGE.size:
        raise DataError("truncated .dimg")
    magic, h, w, c, mod = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DataError("bad .dimg magic")
    n = h * w * c
    expected = _HEADER.size + 4 * n + _RANGE.size
    if len(buf) != expected:
        raise DataError(f".dimg size {len(buf)} != expected {expected}")
    values = np.frombuffer(buf, dtype="<f4", count=n, offset=_HEADER.size).astype(np.float64)
    lo, hi = _RANGE.unpack_from(buf, _HEADER.size + 4 * n)
    try:
        modality = Modality(mod)
    except ValueError as exc:
        raise DataError(f"unknown modality code {mod}") from exc
    return DynamicImage(values.reshape(h, w, c), modality, (lo, hi), normalized=False)


def write_dimg(img: DynamicImage, path) -> None:
    Path(path).write_bytes(encode(img))


def read_dimg(path) -> DynamicImage:
    return decode(Path(path).read_bytes())


def save_preview(img: DynamicImage, path) -> None:
    """8-bit PNG of the normalized image (grayscale for depth)."""
    norm = img if img.normalized else normalize_image(img)
    px = np.rint(np.clip(norm.values, 0.0, 1.0) * 255.0).astype(np.uint8)
    if px.shape[2] == 1:
        px = px[:, :, 0]
    Image.fromarray(px).save(path)
