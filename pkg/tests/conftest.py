import numpy as np
import pytest
from hypothesis import settings

from config.models import ModelConfig, TrainConfig, TransformConfig
from engine.parallel import get_worker_count, set_worker_count
from tests.helpers import smooth_texture

settings.register_profile("fast", max_examples=20, deadline=None)
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile("fast")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """Keep the append-only run and checkpoint logs out of the working tree"""
    monkeypatch.setattr("utils.logger.RUN_LOG_FILE", str(tmp_path / "logs" / "training_runs.log"))
    monkeypatch.setattr("utils.logger.CHECKPOINT_LOG_FILE", str(tmp_path / "logs" / "checkpoints.log"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_config():
    return ModelConfig.desk_scale()


@pytest.fixture
def tiny_config():
    """Smallest admissible network: H_L = 32, radius 1 everywhere"""
    return ModelConfig.desk_scale(
        lnet_height=32,
        lnet_width=32,
        local_radius={"L2": 1, "L3": 1, "L4": 1},
        backbone_channels=[4, 8, 8, 8],
        mapping_channels=[8, 8, 8, 8, 4],
        decoder_channels=[8, 8, 8, 8, 4],
        refinement_channels=[8, 8, 8, 8, 8, 4],
        dtype="float64",
    )


@pytest.fixture
def identity_transforms():
    return TransformConfig.identity()


@pytest.fixture
def quick_train():
    return TrainConfig(batch_size=1, iterations=3, log_every=1, seed=5)


@pytest.fixture
def single_worker():
    previous = get_worker_count()
    set_worker_count(1)
    yield
    set_worker_count(previous)


@pytest.fixture
def texture(rng):
    """Smooth random RGB image (3, 96, 96) in [0, 1]"""
    return smooth_texture(rng, 96)
