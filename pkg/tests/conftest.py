"""Shared fixtures: toy images and trained projects.

The desk_project fixture runs the full desk-scale training once per session
(a few minutes on CPU) and is reused by every test that needs a properly
trained model; tiny_project trains a throwaway configuration in seconds for
plumbing tests.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import numpy as np
import pytest
import torch

torch.set_num_threads(1)  # fastest on small tensors and reproducible

from mogan.imaging import RoiBox
from mogan.project import ProjectStore
from mogan.trainer import TrainConfig

DESK_BOX = RoiBox(12, 12, 52, 52)
TINY_BOX = RoiBox(3, 3, 29, 29)


def make_toy_image(size: int = 64) -> np.ndarray:
    """Sky gradient, striped ground and a tree: smooth coarse structure with
    a clearly structured ROI object."""
    h = w = size
    y, x = np.mgrid[0:h, 0:w].astype(np.float32)
    img = np.zeros((h, w, 3), np.float32)
    img[..., 0] = 0.45 + 0.25 * (y / h)
    img[..., 1] = 0.55 + 0.25 * (y / h)
    img[..., 2] = 0.85 - 0.15 * (y / h)
    ground = y > 0.78 * h
    img[ground] = np.array([0.38, 0.30, 0.18], np.float32) + 0.08 * np.sin(
        x[ground] / 3.0
    )[:, None]
    cx, cy = w / 2.0, 0.42 * h
    trunk = (np.abs(x - cx) < w / 26) & (y > 0.47 * h) & (y < 0.79 * h)
    img[trunk] = [0.32, 0.20, 0.10]
    crown = ((x - cx) ** 2 / (0.032 * w * w) + (y - cy) ** 2 / (0.022 * h * h)) < 1
    img[crown] = [0.12, 0.45, 0.15]
    img[crown] += (0.08 * np.sin(x[crown] / 2.0) * np.cos(y[crown] / 2.0))[:, None]
    img = np.clip(img, 0.0, 1.0)
    # PNG-exact values (k/255) so images survive save/load bit-identically
    return (np.rint(img * 255.0) / 255.0).astype(np.float32)


@pytest.fixture(scope="session")
def toy_image() -> np.ndarray:
    return make_toy_image(64)


def tiny_config(**overrides) -> TrainConfig:
    defaults = dict(iters_per_scale=4, base_channels=8, injector_stages=2, seed=11)
    defaults.update(overrides)
    return TrainConfig(**defaults)


@pytest.fixture(scope="session")
def tiny_project(tmp_path_factory):
    """A 33×33 project trained in seconds; good for plumbing, not quality."""
    image = make_toy_image(33)
    store = ProjectStore(tmp_path_factory.mktemp("tiny_store"))
    project_id = store.create_project(image)
    store.set_roi(project_id, [TINY_BOX])
    config = tiny_config()
    store.train(project_id, config)
    return SimpleNamespace(
        store=store, project_id=project_id, config=config, image=image, box=TINY_BOX
    )


@pytest.fixture(scope="session")
def desk_project(tmp_path_factory, toy_image):
    """The bundled 64×64 desk-scale training used by the acceptance suite."""
    store = ProjectStore(tmp_path_factory.mktemp("desk_store"))
    project_id = store.create_project(toy_image)
    store.set_roi(project_id, [DESK_BOX])
    config = TrainConfig.profile("desk", seed=7)
    start = time.time()
    store.train(project_id, config)
    duration = time.time() - start
    return SimpleNamespace(
        store=store,
        project_id=project_id,
        config=config,
        duration=duration,
        image=toy_image,
        box=DESK_BOX,
    )
