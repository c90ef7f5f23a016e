"""CSV loading, chronological splits, train-statistics scaling and window batching."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataFormatError, SplitError

STD_FLOOR = 1e-8

# (train, val, test) point counts used by the common benchmark protocol
KNOWN_SPLITS = {
    "etth1": (8545, 2881, 2881),
    "etth2": (8545, 2881, 2881),
    "ettm1": (34465, 11521, 11521),
    "ettm2": (34465, 11521, 11521),
}


@dataclass
class RawDataset:
    timestamps: list[str]
    values: np.ndarray  # (T, C) float64
    channel_names: list[str]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def load_csv(path) -> RawDataset:
    """Read a ``date,<ch1>,<ch2>,...`` file. Missing or non-numeric cells are errors."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "date":
            raise DataFormatError(f"{path}: header row must start with a 'date' column")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise DataFormatError(f"{path}: no data columns after 'date'")
        stamps: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}"
                )
            vals = []
            for col, cell in zip(names, row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataFormatError(f"{path}: row {lineno}, column {col!r}: non-finite value")
                vals.append(v)
            stamps.append(row[0])
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return RawDataset(stamps, np.asarray(rows, dtype=np.float64), names)


def write_csv(path_or_file, values: np.ndarray, channel_names, timestamps=None) -> None:
    """Write rows in the same layout ``load_csv`` reads."""
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *channel_names])
        for i, row in enumerate(np.asarray(values)):
            stamp = timestamps[i] if timestamps is not None else str(i)
            w.writerow([stamp, *(repr(float(v)) for v in row)])
    finally:
        if own:
            fh.close()


@dataclass(frozen=True)
class SplitSpec:
    """Either explicit point ``counts`` or ``ratios`` for (train, val, test)."""

    counts: tuple[int, int, int] | None = None
    ratios: tuple[float, float, float] | None = (0.7, 0.1, 0.2)
    border: bool = True

    @classmethod
    def for_dataset(cls, name: str) -> "SplitSpec":
        key = Path(name).stem.lower()
        if key in KNOWN_SPLITS:
            return cls(counts=KNOWN_SPLITS[key], ratios=None)
        return cls()

    def to_dict(self) -> dict:
        if self.counts is not None:
            return {"counts": list(self.counts)}
        return {"ratios": list(self.ratios)}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        if "counts" in d:
            return cls(counts=tuple(int(v) for v in d["counts"]), ratios=None)
        return cls(ratios=tuple(float(v) for v in d["ratios"]))


def split(n_steps: int, spec: SplitSpec, lookback: int, horizon: int = 1) -> dict[str, tuple[int, int]]:
    """Chronological ``[start, stop)`` source ranges for train/val/test.

    Val and test ranges reach back ``lookback`` points into the preceding
    split so that their first target is the first point of their own split.
    """
    if spec.counts is not None:
        n_train, n_val, n_test = (int(v) for v in spec.counts)
        if n_train + n_val + n_test > n_steps:
            raise SplitError(f"split counts {spec.counts} exceed series length {n_steps}")
    else:
        r_train, r_val, r_test = spec.ratios
        if min(spec.ratios) < 0 or r_train + r_val + r_test > 1 + 1e-9:
            raise SplitError(f"invalid split ratios {spec.ratios}")
        n_train = int(n_steps * r_train)
        n_test = int(n_steps * r_test)
        n_val = n_steps - n_train - n_test
        if r_val == 0:
            n_val = 0
    for name, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        if n <= 0:
            raise SplitError(f"{name} split is empty")
    back = lookback if spec.border else 0
    ranges = {
        "train": (0, n_train),
        "val": (n_train - back, n_train + n_val),
        "test": (n_train + n_val - back, n_train + n_val + n_test),
    }
    for name, (lo, hi) in ranges.items():
        if hi - lo < lookback + horizon:
            raise SplitError(
                f"{name} split has {hi - lo} points, needs at least lookback+horizon={lookback + horizon}"
            )
    return ranges


def n_windows(n_points: int, lookback: int, horizon: int) -> int:
    return max(0, n_points - lookback - horizon + 1)


class SeriesStandardizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Per-channel z-scoring with a hard floor on the scale.

    Unlike ``sklearn.preprocessing.StandardScaler`` a constant channel maps
    to exactly zero rather than being left unscaled.
    """

    def __init__(self, std_floor: float = STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.maximum(X.std(axis=0), self.std_floor)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self)
        X = np.asarray(X, dtype=np.float64)
        return X * self.scale_ + self.mean_


def standardize(ds: RawDataset | np.ndarray, train_range: tuple[int, int]):
    """Scale every channel by statistics of ``train_range``; returns (scaled, scaler)."""
    values = ds.values if isinstance(ds, RawDataset) else np.asarray(ds, dtype=np.float64)
    lo, hi = train_range
    if hi <= lo:
        raise SplitError("train range is empty")
    scaler = SeriesStandardizer().fit(values[lo:hi])
    return scaler.transform(values), scaler


@dataclass
class SeriesBatch:
    X: np.ndarray  # (B, L, C)
    Y: np.ndarray  # (B, H, C)
    starts: np.ndarray  # absolute index of each window's first lookback row


def window_starts(data_range: tuple[int, int], lookback: int, horizon: int) -> np.ndarray:
    lo, hi = data_range
    n = n_windows(hi - lo, lookback, horizon)
    return lo + np.arange(n)


def make_batches(
    values: np.ndarray,
    data_range: tuple[int, int],
    lookback: int,
    horizon: int,
    batch_size: int,
    shuffle: bool = False,
    seed=None,
    dtype=np.float32,
) -> Iterator[SeriesBatch]:
    """Yield every window of ``data_range`` exactly once; the last batch may be short."""
    starts = window_starts(data_range, lookback, horizon)
    if starts.size == 0:
        raise SplitError(
            f"range {data_range} holds no window of lookback {lookback} + horizon {horizon}"
        )
    if shuffle:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        starts = rng.permutation(starts)
    offs_x = np.arange(lookback)
    offs_y = np.arange(lookback, lookback + horizon)
    for i in range(0, starts.size, batch_size):
        s = starts[i : i + batch_size]
        X = values[s[:, None] + offs_x].astype(dtype, copy=False)
        Y = values[s[:, None] + offs_y].astype(dtype, copy=False)
        yield SeriesBatch(X, Y, s)


@dataclass
class ForecastData:
    """A standardised series with its split ranges, ready for training."""

    values: np.ndarray  # standardised (T, C)
    ranges: dict[str, tuple[int, int]]
    scaler: SeriesStandardizer
    lookback: int
    horizon: int
    channel_names: list[str] = field(default_factory=list)
    split_spec: SplitSpec = field(default_factory=SplitSpec)

    @classmethod
    def from_raw(cls, ds: RawDataset | np.ndarray, spec: SplitSpec, lookback: int, horizon: int):
        values = ds.values if isinstance(ds, RawDataset) else np.asarray(ds, dtype=np.float64)
        names = ds.channel_names if isinstance(ds, RawDataset) else [f"c{i}" for i in range(values.shape[1])]
        ranges = split(values.shape[0], spec, lookback, horizon)
        scaled, scaler = standardize(values, ranges["train"])
        return cls(scaled, ranges, scaler, lookback, horizon, list(names), spec)

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def batches(self, name: str, batch_size: int, shuffle: bool = False, seed=None, dtype=np.float32):
        return make_batches(
            self.values, self.ranges[name], self.lookback, self.horizon, batch_size, shuffle, seed, dtype
        )

    def n_windows(self, name: str) -> int:
        lo, hi = self.ranges[name]
        return n_windows(hi - lo, self.lookback, self.horizon)
