import sys

import numpy as np
import pytest
from PIL import Image

from dynimg.rank_pooling import DynamicImage
from dynimg.frame_io import Modality


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_rgb(path, arr_u8):
    Image.fromarray(np.asarray(arr_u8, dtype=np.uint8)).save(path)


def write_depth(path, arr_u16):
    Image.fromarray(np.asarray(arr_u16, dtype=np.uint16)).save(path)


def gray_image(values, modality=Modality.DEPTH):
    """Normalized single-channel DynamicImage from a 2-D array in [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    return DynamicImage(v[:, :, None], modality, normalized=True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
