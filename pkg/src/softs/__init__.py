"""NumPy implementation of the SOFTS forecaster (series embedding + STAR blocks)."""

from .data import ForecastData, RawDataset, SeriesBatch, SeriesStandardizer, SplitSpec, load_csv
from .estimator import SOFTSForecaster
from .exceptions import SoftsError
from .model import ModelConfig, SoftsModel, count_params, revin_denormalize, revin_normalize
from .star import PoolingKind, StarBlock, pool
from .tensor import Tensor
from .train import TrainConfig, evaluate, fit

__all__ = [
    "ForecastData",
    "ModelConfig",
    "PoolingKind",
    "RawDataset",
    "SOFTSForecaster",
    "SeriesBatch",
    "SeriesStandardizer",
    "SoftsError",
    "SoftsModel",
    "SplitSpec",
    "StarBlock",
    "Tensor",
    "TrainConfig",
    "count_params",
    "evaluate",
    "fit",
    "load_csv",
    "pool",
    "revin_denormalize",
    "revin_normalize",
]

__version__ = "0.1.0"
