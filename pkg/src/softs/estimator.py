"""scikit-learn compatible wrapper around the forecaster and its training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import ForecastData, SplitSpec
from .exceptions import ShapeError, SplitError
from .model import ModelConfig, SoftsModel
from .train import TrainConfig, fit


class SOFTSForecaster(RegressorMixin, BaseEstimator):
    """Multivariate forecaster with STAR channel aggregation.

    ``fit`` takes a single series of shape (n_steps, n_channels), already in
    whatever space predictions should be made (typically standardised). The
    last ``validation_fraction`` of it, or ``X_val`` when given, drives early
    stopping. ``predict`` takes lookback windows (n_windows, lookback,
    n_channels) and returns (n_windows, horizon, n_channels); a 2-D input is
    treated as a history and forecast from its last ``lookback`` rows.

    Examples
    --------
    >>> rng = np.random.default_rng(0)
    >>> series = rng.normal(size=(200, 3))
    >>> est = SOFTSForecaster(lookback=16, horizon=4, hidden=8, core=4, layers=1, epochs=1)
    >>> est.fit(series).predict(series).shape
    (4, 3)
    """

    def __init__(
        self,
        lookback: int = 96,
        horizon: int = 96,
        hidden: int = 256,
        core: int = 64,
        layers: int = 2,
        pooling: str = "stochastic",
        use_revin: bool = True,
        baseline: bool = False,
        learning_rate: float = 3e-4,
        epochs: int = 10,
        batch_size: int = 32,
        patience: int = 3,
        validation_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.lookback = lookback
        self.horizon = horizon
        self.hidden = hidden
        self.core = core
        self.layers = layers
        self.pooling = pooling
        self.use_revin = use_revin
        self.baseline = baseline
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _model_config(self, channels: int) -> ModelConfig:
        return ModelConfig(
            lookback=self.lookback,
            horizon=self.horizon,
            channels=channels,
            hidden=self.hidden,
            core=self.core,
            layers=self.layers,
            pooling=self.pooling,
            use_revin=self.use_revin,
            baseline=self.baseline,
            seed=self.seed,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            seed=self.seed,
        )

    def _as_data(self, X: np.ndarray, X_val: np.ndarray | None) -> ForecastData:
        L, H = self.lookback, self.horizon
        if X_val is not None:
            X_val = check_array(X_val, dtype=np.float64)
            if X_val.shape[1] != X.shape[1]:
                raise ShapeError(f"X_val has {X_val.shape[1]} channels, X has {X.shape[1]}")
            values = np.vstack([X, X_val])
            n = X.shape[0]
            ranges = {"train": (0, n), "val": (n - L, values.shape[0])}
        else:
            n_val = max(H, int(round(X.shape[0] * self.validation_fraction)))
            n_train = X.shape[0] - n_val
            values = X
            ranges = {"train": (0, n_train), "val": (n_train - L, X.shape[0])}
        for name, (lo, hi) in ranges.items():
            if lo < 0 or hi - lo < L + H:
                raise SplitError(f"{name} portion is too short for lookback {L} + horizon {H}")
        return ForecastData(values, ranges, None, L, H, split_spec=SplitSpec())

    def fit(self, X, y=None, X_val=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        data = self._as_data(X, X_val)
        model = SoftsModel(self._model_config(X.shape[1]))
        self.model_, history = fit(model, data, self._train_config())
        self.history_ = history.records
        self.best_val_mse_ = history.best_val
        return self

    def _windows(self, X) -> tuple[np.ndarray, bool]:
        X = check_array(X, dtype=np.float64, allow_nd=True, ensure_min_samples=1)
        if X.ndim == 2:
            if X.shape[0] < self.lookback:
                raise ShapeError(f"need at least {self.lookback} rows, got {X.shape[0]}")
            return X[None, -self.lookback :, :], True
        if X.ndim != 3:
            raise ShapeError(f"expected 2-D history or 3-D windows, got {X.ndim}-D input")
        return X, False

    def predict(self, X):
        check_is_fitted(self, "model_")
        windows, single = self._windows(X)
        if windows.shape[2] != self.n_features_in_:
            raise ShapeError(f"X has {windows.shape[2]} channels, model was fitted on {self.n_features_in_}")
        out = self.model_.forward(windows, training=False).astype(np.float64)
        return out[0] if single else out

    def score(self, X, y, sample_weight=None):
        """Negative mean squared error (greater is better)."""
        pred = self.predict(X)
        y = np.asarray(y, dtype=np.float64)
        if pred.shape != y.shape:
            raise ShapeError(f"target shape {y.shape} != prediction shape {pred.shape}")
        return -float(np.mean((pred - y) ** 2))

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.required = False
        return tags
