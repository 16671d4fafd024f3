import numpy as np
import pytest

from memometer import Dataset, ExactMixtureScore, Schedule


@pytest.fixture
def default_schedule():
    return Schedule()


@pytest.fixture
def small_schedule():
    return Schedule(num_steps=50)


def make_mixture(points, schedule=None, value_range=None):
    """Dataset + exact score provider from raw 2-D/row points."""
    points = np.asarray(points, dtype=np.float64)
    if value_range is None:
        pad = 1.0 + float(np.abs(points).max())
        value_range = (-pad, pad)
    ds = Dataset(
        samples=points.astype(np.float32),
        ids=[f"p{i:03d}" for i in range(len(points))],
        value_range=value_range,
        shape_meta=(points.shape[1],),
    )
    provider = ExactMixtureScore(ds, schedule or Schedule())
    return ds, provider


@pytest.fixture
def two_sample_mixture():
    return make_mixture(np.array([[1.0, 0.0], [-1.0, 0.0]]))


@pytest.fixture
def ring5_mixture():
    ang = 2 * np.pi * np.arange(5) / 5
    return make_mixture(np.stack([np.cos(ang), np.sin(ang)], axis=1))
