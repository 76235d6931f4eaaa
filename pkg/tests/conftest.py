import numpy as np
import pytest

from trajpriv.geo import BoundingBox, Trajectory, TrajectoryDataset


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def unit_box():
    return BoundingBox(0.0, 0.0, 1.0, 1.0)


def make_dataset(n=6, length=5, seed=0, bbox=None, id_prefix="t"):
    """Small random fixed-length dataset inside the unit degree box."""
    box = bbox or BoundingBox(0.0, 0.0, 1.0, 1.0)
    gen = np.random.default_rng(seed)
    trajs = []
    for i in range(n):
        lat = gen.uniform(box.lat_min, box.lat_max, size=length)
        lon = gen.uniform(box.lon_min, box.lon_max, size=length)
        trajs.append(Trajectory(f"{id_prefix}{i}", np.column_stack([lat, lon])))
    return TrajectoryDataset(trajs, fixed_length=length, bbox=box)


@pytest.fixture
def small_dataset():
    return make_dataset()
