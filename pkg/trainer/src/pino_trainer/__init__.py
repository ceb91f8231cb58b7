"""Physics-informed training for a two-asset pricing step operator.

The package fits a Fourier-layer network that advances a digital-option
price surface by a short time step, supervising against a closed-form
bivariate-normal benchmark, and exports the result as portable binary
weight and fixture files.
"""

from .errors import ConfigError, DivergenceError, ExportError, TrainerError
from .export import export_fixtures, export_weights, load_weights
from .interp import interp2d
from .losses import Batch, LossParts, advance_with_rate, pde_residual, total_loss
from .model import IN_CHANNELS, GridSpec, PinoNet, encode_batch
from .pricing import MarketParams, bvn_cdf, norm_cdf, payoff, price, price_grid
from .sampling import CollocationSets, TrainConfig, sample_collocation
from .training import HISTORY_COLUMNS, TrainResult, assemble_batch, train, validate

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "CollocationSets",
    "ConfigError",
    "DivergenceError",
    "ExportError",
    "GridSpec",
    "HISTORY_COLUMNS",
    "IN_CHANNELS",
    "LossParts",
    "MarketParams",
    "PinoNet",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "advance_with_rate",
    "assemble_batch",
    "bvn_cdf",
    "encode_batch",
    "export_fixtures",
    "export_weights",
    "interp2d",
    "load_weights",
    "norm_cdf",
    "payoff",
    "pde_residual",
    "price",
    "price_grid",
    "sample_collocation",
    "total_loss",
    "train",
    "validate",
]
