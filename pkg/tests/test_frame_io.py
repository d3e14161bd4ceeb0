import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dynimg.errors import DataError
from dynimg.frame_io import (Frame, FrameSequence, Modality, load_manifest, load_sequence,
                             save_sequence)

from conftest import write_depth, write_rgb


def test_load_three_rgb_frames(tmp_path, rng):
    frames = rng.integers(0, 256, size=(3, 4, 5, 3), dtype=np.uint8)
    for i, f in enumerate(frames):
        write_rgb(tmp_path / f"frame_{i:06d}.png", f)
    seq = load_sequence(tmp_path, Modality.RGB)
    assert seq.T == 3
    assert seq.shape == (4, 5, 3)
    np.testing.assert_array_equal(seq.as_array(), frames / 255.0)


def test_load_zero_depth_pgm(tmp_path):
    write_depth(tmp_path / "frame_000000.pgm", np.zeros((4, 4)))
    seq = load_sequence(tmp_path, Modality.DEPTH)
    assert seq.T == 1
    assert seq.shape == (4, 4, 1)
    assert np.all(seq.as_array() == 0.0)


def test_depth_png_scaled_by_65535(tmp_path):
    write_depth(tmp_path / "frame_000000.png", np.array([[0, 65535], [32768, 1]]))
    v = load_sequence(tmp_path, Modality.DEPTH).frames[0].data[:, :, 0]
    np.testing.assert_array_equal(v, np.array([[0, 65535], [32768, 1]]) / 65535.0)


def test_mixed_dimensions_rejected(tmp_path):
    write_rgb(tmp_path / "frame_000000.png", np.zeros((4, 4, 3)))
    write_rgb(tmp_path / "frame_000001.png", np.zeros((8, 8, 3)))
    with pytest.raises(DataError, match="inconsistent dimensions"):
        load_sequence(tmp_path, Modality.RGB)


def test_frames_sorted_numerically(tmp_path):
    for i in (10, 2, 0):
        write_depth(tmp_path / f"frame_{i:06d}.png", np.full((2, 2), i * 1000))
    seq = load_sequence(tmp_path, Modality.DEPTH)
    assert [f.data[0, 0, 0] * 65535 for f in seq.frames] == pytest.approx([0, 2000, 10000])


def test_missing_and_empty_directory(tmp_path):
    with pytest.raises(DataError, match="missing directory"):
        load_sequence(tmp_path / "nope", Modality.RGB)
    with pytest.raises(DataError, match="zero frames"):
        load_sequence(tmp_path, Modality.RGB)


def test_wrong_bit_depth(tmp_path):
    write_rgb(tmp_path / "frame_000000.png", np.zeros((4, 4, 3)))
    with pytest.raises(DataError, match="bit depth"):
        load_sequence(tmp_path, Modality.DEPTH)
    other = tmp_path / "d"
    other.mkdir()
    write_depth(other / "frame_000000.png", np.zeros((4, 4)))
    with pytest.raises(DataError, match="bit depth"):
        load_sequence(other, Modality.RGB)


def test_frame_invariants():
    with pytest.raises(DataError):
        Frame(np.full((2, 2, 3), 1.5))
    with pytest.raises(DataError):
        FrameSequence(Modality.RGB, (Frame(np.zeros((2, 2, 1))),))
    f = Frame(np.zeros((2, 2, 3)))
    assert f.data.size == f.height * f.width * f.channels
    with pytest.raises(ValueError):
        f.data[0, 0, 0] = 1.0


@settings(max_examples=20, deadline=None)
@given(arrays(np.uint8, (3, 4, 5, 3)), arrays(np.uint16, (3, 4, 5)))
def test_round_trip_bit_identical(tmp_path_factory, rgb_raw, depth_raw):
    d = tmp_path_factory.mktemp("rt")
    rgb = FrameSequence(Modality.RGB, tuple(Frame(f / 255.0) for f in rgb_raw))
    depth = FrameSequence(Modality.DEPTH, tuple(Frame(f / 65535.0) for f in depth_raw))
    save_sequence(rgb, d / "rgb")
    save_sequence(depth, d / "depth")
    assert load_sequence(d / "rgb", Modality.RGB) == rgb
    assert load_sequence(d / "depth", Modality.DEPTH) == depth


def test_load_is_deterministic(tmp_path, rng):
    for i in range(4):
        write_rgb(tmp_path / f"frame_{i:06d}.png", rng.integers(0, 256, (6, 6, 3)))
    assert load_sequence(tmp_path, Modality.RGB) == load_sequence(tmp_path, Modality.RGB)


def _video(root, name, n_rgb, n_depth):
    (root / name / "rgb").mkdir(parents=True)
    (root / name / "depth").mkdir(parents=True)
    for i in range(n_rgb):
        write_rgb(root / name / "rgb" / f"frame_{i:06d}.png", np.zeros((4, 4, 3)))
    for i in range(n_depth):
        write_depth(root / name / "depth" / f"frame_{i:06d}.png", np.zeros((4, 4)))
    return {"video_id": name, "label": "a", "rgb_dir": f"{name}/rgb", "depth_dir": f"{name}/depth"}


def test_manifest_two_entries(tmp_path):
    items = [_video(tmp_path, "v1", 2, 2), _video(tmp_path, "v2", 3, 3)]
    (tmp_path / "m.json").write_text(json.dumps(items))
    m = load_manifest(tmp_path / "m.json")
    assert len(m) == 2
    assert m.entries[1].rgb_dir == tmp_path / "v2" / "rgb"


def test_manifest_duplicate_id(tmp_path):
    item = _video(tmp_path, "v1", 2, 2)
    (tmp_path / "m.json").write_text(json.dumps([item, item]))
    with pytest.raises(DataError, match="duplicate id"):
        load_manifest(tmp_path / "m.json")


def test_manifest_length_mismatch(tmp_path):
    item = _video(tmp_path, "v1", 10, 9)
    (tmp_path / "m.json").write_text(json.dumps([item]))
    with pytest.raises(DataError, match="modality length mismatch"):
        load_manifest(tmp_path / "m.json")


def test_manifest_malformed_json(tmp_path):
    (tmp_path / "m.json").write_text("[{")
    with pytest.raises(DataError, match="malformed JSON"):
        load_manifest(tmp_path / "m.json")
