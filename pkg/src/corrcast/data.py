"""Dataset container, CSV round-trip, covariates, scaling and splits."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    """Aligned multivariate series: integer time index + (T, N) values."""

    values: np.ndarray
    index: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.index = np.asarray(self.index, dtype=int)
        if self.values.ndim != 2 or self.index.shape != (self.values.shape[0],):
            raise ValueError("values must be (T, N) with a matching index")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]


def write_csv(dataset: Dataset, path) -> None:
    """Header timestamp,s0,...,s{N-1}; full-precision floats."""
    lines = ["timestamp," + ",".join(f"s{i}" for i in range(dataset.n_series))]
    for t, row in zip(dataset.index, dataset.values):
        lines.append(f"{t}," + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_csv(path) -> Dataset:
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    if header[0] != "timestamp" or any(
        name != f"s{i}" for i, name in enumerate(header[1:])
    ):
        raise ValueError(f"{path}: expected header timestamp,s0,...,s{{N-1}}")
    rows = [line.split(",") for line in text[1:]]
    index = np.array([int(r[0]) for r in rows])
    values = np.array([[float(v) for v in r[1:]] for r in rows])
    return Dataset(values=values, index=index)


def time_covariates(index: np.ndarray) -> np.ndarray:
    """Hour-of-day and day-of-week scalars from an hourly integer index."""
    index = np.asarray(index, dtype=int)
    hour = (index % 24) / 23.0
    day = ((index // 24) % 7) / 6.0
    return np.stack([hour, day], axis=1)


@dataclass(frozen=True)
class Scaler:
    """Per-series standardization fitted on the training span."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Scaler":
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def inverse(self, values: np.ndarray, series_idx=None) -> np.ndarray:
        """Undo standardization; works on (..., B) sample stacks."""
        if series_idx is None:
            return values * self.std + self.mean
        series_idx = np.asarray(series_idx, dtype=int)
        return values * self.std[series_idx] + self.mean[series_idx]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Scaler":
        return cls(
            mean=np.asarray(payload["mean"], dtype=float),
            std=np.asarray(payload["std"], dtype=float),
        )


@dataclass(frozen=True)
class Split:
    """Sequential train/validation/test boundaries (validation = test span)."""

    train_end: int
    val_end: int
    n_steps: int

    @property
    def test_span(self) -> int:
        return self.n_steps - self.val_end


def sequential_split(n_steps: int, horizon: int, n_instances: int) -> Split:
    """Test span covers n_instances consecutive origins of a Q-step horizon."""
    span = horizon + n_instances - 1
    val_end = n_steps - span
    train_end = val_end - span
    if train_end <= 0:
        raise ValueError(
            f"series too short: {n_steps} steps cannot hold two {span}-step spans"
        )
    return Split(train_end=train_end, val_end=val_end, n_steps=n_steps)
