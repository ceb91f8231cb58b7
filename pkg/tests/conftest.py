import numpy as np
import pytest

from pintbs.core import Field, Grid2D, ModelParams
from pintbs.fno import IN_CHANNELS, FnoLayer, FnoModel


@pytest.fixture(scope="session")
def bench_params() -> ModelParams:
    return ModelParams.benchmark()


@pytest.fixture(scope="session")
def small_grid() -> Grid2D:
    """Desk-scale grid with the benchmark extents (coarse spacing)."""
    return Grid2D(nx=21, ny=21, x_max=300.0, y_max=300.0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture()
def field_factory(rng):
    def make(grid: Grid2D, precision: str = "double") -> Field:
        return Field.from_array(grid, rng.standard_normal((grid.nx, grid.ny)),
                                precision)
    return make


def _make_fno_model(width: int = 4, modes: int = 3, n_layers: int = 2,
                    seed: int = 0, scale: float = 1.0) -> FnoModel:
    """Random but well-conditioned model for structural tests (untrained)."""
    r = np.random.default_rng(seed)
    layers = []
    for _ in range(n_layers):
        spectral = ((r.standard_normal((width, width, modes, modes))
                     + 1j * r.standard_normal((width, width, modes, modes)))
                    * (scale / width)).astype(np.complex64)
        layers.append(FnoLayer(
            spectral=spectral,
            bypass_w=(r.standard_normal((width, width)) * scale / width).astype(np.float32),
            bypass_b=(r.standard_normal(width) * 0.1).astype(np.float32),
            bn_scale=(np.abs(r.standard_normal(width)) + 0.5).astype(np.float32),
            bn_shift=(r.standard_normal(width) * 0.1).astype(np.float32),
            bn_mean=(r.standard_normal(width) * 0.1).astype(np.float32),
            bn_var=(np.abs(r.standard_normal(width)) + 0.5).astype(np.float32)))
    return FnoModel(
        width=width, modes=modes, layers=tuple(layers),
        lift_w=(r.standard_normal((IN_CHANNELS, width)) * 0.5).astype(np.float32),
        lift_b=(r.standard_normal(width) * 0.1).astype(np.float32),
        proj_w=(r.standard_normal((width, 1)) / width).astype(np.float32),
        proj_b=(r.standard_normal(1) * 0.1).astype(np.float32))


def _make_zeroed_fno_model(width: int = 2, modes: int = 1, n_layers: int = 1,
                           proj_b: float = 0.0) -> FnoModel:
    """All-zero weights (unit bn variance) apart from an optional projection bias."""
    layers = tuple(FnoLayer(
        spectral=np.zeros((width, width, modes, modes), dtype=np.complex64),
        bypass_w=np.zeros((width, width), dtype=np.float32),
        bypass_b=np.zeros(width, dtype=np.float32),
        bn_scale=np.ones(width, dtype=np.float32),
        bn_shift=np.zeros(width, dtype=np.float32),
        bn_mean=np.zeros(width, dtype=np.float32),
        bn_var=np.ones(width, dtype=np.float32)) for _ in range(n_layers))
    return FnoModel(
        width=width, modes=modes, layers=layers,
        lift_w=np.zeros((IN_CHANNELS, width), dtype=np.float32),
        lift_b=np.zeros(width, dtype=np.float32),
        proj_w=np.zeros((width, 1), dtype=np.float32),
        proj_b=np.full(1, proj_b, dtype=np.float32))


@pytest.fixture(scope="session")
def fno_factory():
    return _make_fno_model


@pytest.fixture(scope="session")
def zeroed_fno_factory():
    return _make_zeroed_fno_model
