import sys

import numpy as np
import pytest

from artifact.core.types import ImageTensor, RngStream


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo acceptance criterion outcomes past output capture."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def checkerboard():
    """4x4-cell checkerboard on 32x32, all channels identical."""
    ys, xs = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    cells = ((xs // 4 + ys // 4) % 2).astype(np.float64)
    return ImageTensor(np.broadcast_to(cells, (3, 32, 32)).copy())


@pytest.fixture
def checkerboard_8():
    ys, xs = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    cells = ((xs + ys) % 2).astype(np.float64)
    return ImageTensor(np.broadcast_to(cells, (3, 8, 8)).copy())


@pytest.fixture
def smooth_gradient():
    ramp = np.linspace(0.2, 0.8, 32)
    plane = np.broadcast_to(ramp, (32, 32))
    return ImageTensor(np.broadcast_to(plane, (3, 32, 32)).copy())


@pytest.fixture
def random_image(rng):
    return ImageTensor(rng.random((3, 32, 32)))


@pytest.fixture
def random_image_8(rng):
    return ImageTensor(rng.random((3, 8, 8)))


@pytest.fixture
def grating():
    """Pure horizontal cosine grating, 8 cycles across 32 px."""
    xs = np.arange(32, dtype=np.float64)
    wave = 0.5 + 0.4 * np.cos(2 * np.pi * 8 * xs / 32)
    plane = np.broadcast_to(wave, (32, 32))
    return ImageTensor(np.broadcast_to(plane, (3, 32, 32)).copy())


@pytest.fixture
def base_stream():
    return RngStream(1234)


@pytest.fixture
def tiny_corpus(tmp_path):
    """Factory: write a small real/fake PNG corpus; returns a DatasetManifest."""
    from artifact.core.io import save_png
    from artifact.core.types import DatasetManifest, Label
    from make_desk_corpus import fake_image, natural_image

    def build(n_real=6, n_fake=6, seed=0, root=None):
        root = root or tmp_path / "corpus"
        entries = []
        for i in range(n_real):
            p = root / "real" / f"r{i:03d}.png"
            save_png(natural_image(RngStream(seed).derive(0, i)), p)
            entries.append((str(p), Label.REAL))
        for i in range(n_fake):
            img, _ = fake_image(RngStream(seed).derive(1, i))
            p = root / "fake" / f"f{i:03d}.png"
            save_png(img, p)
            entries.append((str(p), Label.FAKE))
        return DatasetManifest(entries=entries)

    return build
