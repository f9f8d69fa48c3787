"""Labelled segment sets and the train/validation/test split."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

SPLIT_RATIOS = (0.7, 0.15, 0.15)


@dataclass
class DataSplit:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    def as_dict(self) -> Dict[str, int]:
        return {"train": len(self.y_train), "val": len(self.y_val), "test": len(self.y_test)}


def split_dataset(
    x: np.ndarray,
    y: np.ndarray,
    ratios: Tuple[float, float, float] = SPLIT_RATIOS,
    seed: int = 0,
) -> DataSplit:
    """Shuffle once with ``seed`` and cut into train/val/test by ``ratios``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) != len(y):
        raise ValueError(f"{len(x)} segments but {len(y)} labels")
    if any(r < 0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise ValueError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(y))
    n_train = int(round(ratios[0] * len(y)))
    n_val = int(round(ratios[1] * len(y)))
    train, val, test = np.split(order, [n_train, n_train + n_val])
    return DataSplit(x[train], y[train], x[val], y[val], x[test], y[test])
