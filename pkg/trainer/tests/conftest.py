import numpy as np
import pytest
import torch

from pino_trainer import GridSpec, MarketParams, PinoNet, TrainConfig


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def params() -> MarketParams:
    return MarketParams.benchmark()


@pytest.fixture(scope="session")
def tiny_cfg() -> TrainConfig:
    """A configuration small enough for second-scale training runs."""
    return TrainConfig(width=8, modes=4, n_layers=2, grid_n=16,
                       n_interior=60, n_boundary=30, n_expiry=40, n_initial=30,
                       epochs=8, batch_size=4, seed=11,
                       checkpoint_epochs=(8,))


@pytest.fixture(scope="session")
def tiny_grid(tiny_cfg) -> GridSpec:
    return GridSpec(tiny_cfg.grid_n)


@pytest.fixture
def tiny_model(tiny_cfg) -> PinoNet:
    torch.manual_seed(tiny_cfg.seed)
    return PinoNet(tiny_cfg.width, tiny_cfg.modes, tiny_cfg.n_layers)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
