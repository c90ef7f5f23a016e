import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from softs import SOFTSForecaster
from softs.exceptions import ShapeError, SplitError

KW = dict(lookback=12, horizon=4, hidden=16, core=4, layers=1, epochs=2, batch_size=16)


@pytest.fixture
def series():
    t = np.arange(300)
    return np.stack([np.sin(t / 6), np.cos(t / 9), np.sin(t / 4) * 0.5], axis=1)


def test_params_and_clone():
    est = SOFTSForecaster(**KW, pooling="max")
    params = est.get_params()
    assert params["pooling"] == "max" and params["lookback"] == 12
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(hidden=32)
    assert est.hidden == 32


def test_fit_predict_shapes(series):
    est = SOFTSForecaster(**KW).fit(series)
    assert est.n_features_in_ == 3
    assert len(est.history_) <= 2 and np.isfinite(est.best_val_mse_)
    assert est.predict(series).shape == (4, 3)
    windows = np.stack([series[i : i + 12] for i in range(5)])
    assert est.predict(windows).shape == (5, 4, 3)


def test_predict_history_uses_last_window(series):
    est = SOFTSForecaster(**KW).fit(series)
    np.testing.assert_array_equal(est.predict(series), est.predict(series[None, -12:])[0])


def test_explicit_validation_series(series):
    est = SOFTSForecaster(**KW).fit(series[:200], X_val=series[200:])
    assert np.isfinite(est.best_val_mse_)
    with pytest.raises(ShapeError):
        SOFTSForecaster(**KW).fit(series[:200], X_val=series[200:, :2])


def test_deterministic(series):
    a = SOFTSForecaster(**KW, seed=3).fit(series).predict(series)
    b = SOFTSForecaster(**KW, seed=3).fit(series).predict(series)
    np.testing.assert_array_equal(a, b)


def test_score_is_negative_mse(series):
    est = SOFTSForecaster(**KW).fit(series)
    windows = np.stack([series[i : i + 12] for i in range(0, 200, 10)])
    targets = np.stack([series[i + 12 : i + 16] for i in range(0, 200, 10)])
    assert est.score(windows, targets) == pytest.approx(-np.mean((est.predict(windows) - targets) ** 2))


def test_not_fitted(series):
    with pytest.raises(NotFittedError):
        SOFTSForecaster(**KW).predict(series)


def test_input_validation(series):
    est = SOFTSForecaster(**KW).fit(series)
    with pytest.raises(ShapeError):
        est.predict(series[:, :2])
    with pytest.raises(ShapeError):
        est.predict(series[:5])
    with pytest.raises(ValueError):
        SOFTSForecaster(**KW).fit(np.full((100, 2), np.nan))
    with pytest.raises(SplitError):
        SOFTSForecaster(**KW).fit(series[:15])
