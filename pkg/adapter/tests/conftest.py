"""Shared fixtures: one checkpoint, one image folder, one export run."""

import numpy as np
import pytest
from PIL import Image

from promptseg_adapter import export_bundles, export_decoder_graph, make_checkpoint
from promptseg_adapter.export import ExportJob


@pytest.fixture(scope="session")
def checkpoint_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.pt"
    make_checkpoint(path, seed=3)
    return path


@pytest.fixture(scope="session")
def images_dir(tmp_path_factory):
    folder = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(7)
    shapes = {"sample_a": (100, 80), "sample_b": (64, 64)}
    for name, (h, w) in shapes.items():
        pixels = rng.integers(0, 255, (h, w, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(folder / f"{name}.png")
    return folder


@pytest.fixture(scope="session")
def export_dir(tmp_path_factory, checkpoint_path, images_dir):
    out = tmp_path_factory.mktemp("export")
    export_bundles(ExportJob(checkpoint=checkpoint_path, images=images_dir, out=out))
    return out


@pytest.fixture(scope="session")
def graph_path(tmp_path_factory, checkpoint_path):
    out = tmp_path_factory.mktemp("graph") / "decoder.pt"
    export_decoder_graph(checkpoint_path, out)
    return out
