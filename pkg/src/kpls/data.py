"""Dataset ingestion and response preprocessing."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import BoundsError, ParameterError, SizeError


class ClipPolicy(str, Enum):
    RESCALE = "rescale"
    CLIP = "clip"
    REJECT = "reject"


@dataclass(frozen=True)
class Dataset:
    """Training inputs with centered, bounded responses.

    Predictions map back to the original scale as ``y_mean + y_scale * f(x)``.
    ``index`` is set when the rows were drawn from a discrete population
    model and records the support point of each row.
    """

    X: np.ndarray
    y: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0
    index: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise SizeError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if y.shape[0] < 1:
            raise SizeError("empty dataset")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def bounded_flag(self) -> bool:
        return bool(np.max(np.abs(self.y)) <= 1.0)

    def raw_y(self) -> np.ndarray:
        return self.y_mean + self.y_scale * self.y


def preprocess(raw_X, raw_y, clip_policy: ClipPolicy | str = ClipPolicy.RESCALE) -> Dataset:
    """Center the responses and enforce ``|y_i| <= 1``.

    ``rescale`` divides the centered responses by ``max(1, max|y_i|)``;
    ``clip`` truncates them to [-1, 1], re-centers, and rescales if the
    shift pushed an entry past one; ``reject`` raises
    :class:`BoundsError` if any centered response exceeds one in magnitude.
    """
    policy = ClipPolicy(clip_policy)
    X = np.asarray(raw_X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(raw_y, dtype=float).ravel()
    if y.shape[0] < 2:
        raise SizeError(f"need at least 2 observations, got {y.shape[0]}")
    if X.shape[0] != y.shape[0]:
        raise SizeError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ParameterError("non-finite values in data")

    y_mean = float(np.mean(y))
    centered = y - y_mean
    scale = 1.0
    if policy is ClipPolicy.RESCALE:
        scale = max(1.0, float(np.max(np.abs(centered))))
        centered = centered / scale
    elif policy is ClipPolicy.CLIP:
        centered = np.clip(centered, -1.0, 1.0)
        shift = float(np.mean(centered))
        centered = centered - shift
        y_mean += shift
        # re-centering can push an entry back past one; shrink if so
        scale = max(1.0, float(np.max(np.abs(centered))))
        centered = centered / scale
    elif np.max(np.abs(centered)) > 1.0:
        raise BoundsError(
            f"centered response reaches {np.max(np.abs(centered)):.6g} > 1 under reject policy"
        )
    return Dataset(X, centered, y_mean=y_mean, y_scale=scale)


def read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a CSV with a header row; features first, target last."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    if table.shape[1] < 2:
        raise ParameterError(f"{path}: need at least one feature column and a target column")
    return table[:, :-1], table[:, -1]


def read_features(path: str | Path, d: int) -> np.ndarray:
    """Read prediction inputs; a trailing target column is dropped if present."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    if table.shape[1] == d + 1:
        return table[:, :d]
    if table.shape[1] != d:
        raise ParameterError(f"{path}: expected {d} feature columns, found {table.shape[1]}")
    return table
