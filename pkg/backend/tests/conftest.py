import numpy as np
import pytest

from app.services.data import synth_blobs
from app.services.nn import Model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    """5 inputs, two hidden layers, 3 classes."""
    return Model.mlp(5, (4, 3), 3, seed=0)


@pytest.fixture
def blobs():
    """Three well separated clusters in 6 dimensions."""
    return synth_blobs(classes=3, per_class=40, dim=6, separation=6.0, seed=0, test_per_class=20)


@pytest.fixture
def linear_instance():
    """Centered 8x4 Gaussian points, a linear logistic model with |w| = 0.4, labels it gets right."""
    from app.services.theory import synthetic_instance

    return synthetic_instance(8, 4, seed=0, weight_scale=0.4)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "runs"
    path.mkdir()
    return path
