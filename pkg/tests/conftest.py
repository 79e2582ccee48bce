import numpy as np
import pytest

from bisense.core import SceneGeometry, SystemConfig, TargetState
from bisense.harness.config import load_config


@pytest.fixture
def scene():
    return SceneGeometry()


@pytest.fixture
def full_cfg():
    return load_config("full").system


@pytest.fixture
def desk_cfg():
    return load_config("desk").system


@pytest.fixture
def target():
    return TargetState(position=[7.49, 2.51])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_in_area(rng, scene, n, margin=0.2):
    x0, y0, x1, y1 = scene.area
    pts = rng.uniform([x0 + margin, y0 + margin], [x1 - margin, y1 - margin], size=(n, 2))
    # the Tx-Rx diagonal is degenerate for the range/angle inversion
    keep = np.abs(pts[:, 0] - pts[:, 1]) > margin
    return pts[keep]
