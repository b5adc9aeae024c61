import os

import numpy as np
import pytest

import bagging
import synth_data
from core_types import TrainConfig

TINY = dict(
    epochs=2, bag_size=8, bags_per_step=2, hidden_sizes=(8,), seed=0, workers=1,
    blob_classes=3, blob_feature_dim=4, blob_samples_per_class=20,
)


def pytest_collection_modifyitems(config, items):
    if os.getenv("LLP_DEW_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set LLP_DEW_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny_config():
    return TrainConfig(**TINY)


@pytest.fixture
def blobs(tiny_config):
    return synth_data.generate_blobs(synth_data.BlobSpec.from_config(tiny_config))


@pytest.fixture
def tiny_bags(blobs, tiny_config):
    train, _ = blobs
    return bagging.generate_bags(train, tiny_config.bag_size, tiny_config.seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def run_log(tmp_path, monkeypatch):
    """Keep CLI audit lines out of the working directory."""
    import app
    path = tmp_path / "run.log"
    monkeypatch.setattr(app, "RUN_LOG", path)
    return path
