"""Shared fixtures: canonical cameras and small synthetic scenes."""

import numpy as np
import pytest

from mcss.renderer import View
from mcss.search import build_renders
from mcss.synth import SynthConfig, generate


def canonical_view(width=40, height=30, f=20.0) -> View:
    """Camera at the origin looking down +z (x right, y down)."""
    return View(f, f, width / 2.0, height / 2.0, width, height, np.eye(4))


@pytest.fixture(scope="session")
def small_scene():
    """A cuboid room with two chairs and a table, one wall decoy, at low resolution."""
    cfg = SynthConfig(seed=1, wall_decoys=1, image_size=(48, 36), views=6)
    gt, pool, obs = generate(cfg)
    return gt, pool, obs, build_renders(pool, obs)
