import numpy as np
import pytest

from splitray.exact import build_bvh
from splitray.field import FieldConfig, build_cascades
from helpers import two_wall_scene, wall_mesh


@pytest.fixture(scope="session")
def wall_field():
    """Distance field of a single wall slab at z = 2, default cascades."""
    mesh = wall_mesh(2.0)
    return build_cascades(mesh, np.zeros(3), FieldConfig())


@pytest.fixture(scope="session")
def wall_bvh():
    return build_bvh(two_wall_scene())
