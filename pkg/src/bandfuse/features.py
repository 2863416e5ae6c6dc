"""Per-group mean features and train-statistics standardization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datasets import HsiDataset
from .errors import DataError
from .grouping import BandPartition


@dataclass(eq=False)
class FeatureMatrix:
    """n x c matrix with one column per band group.

    mean/std are per-column training statistics once standardized;
    degenerate marks zero-variance columns that were only centered.
    """

    values: np.ndarray
    partition_ref: str
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def standardized(self) -> bool:
        return self.mean is not None


def partition_ref(part: BandPartition) -> str:
    head = ";".join(",".join(str(i) for i in g.tolist()) for g in part.groups[:2])
    return f"{part.mode}/c{part.n_groups}/{head[:40]}"


def extract_group_means(ds: HsiDataset, part: BandPartition) -> FeatureMatrix:
    """feature(r, i) = mean of the pixel row over the bands of group i."""
    part.validate_cover()
    if part.n_bands != ds.n_bands:
        raise DataError(
            f"partition covers {part.n_bands} bands but dataset has {ds.n_bands}"
        )
    values = np.empty((ds.n_rows, part.n_groups), dtype=np.float64)
    for i, g in enumerate(part.groups):
        values[:, i] = ds.pixels[:, g].mean(axis=1)
    return FeatureMatrix(values=values, partition_ref=partition_ref(part))


def standardize(fm: FeatureMatrix, train_rows) -> FeatureMatrix:
    """Z-score every row using mean/std of the training rows only.

    Population standard deviation (divide by the count). Zero-variance
    columns are centered but not scaled, with a warning.
    """
    train_rows = np.asarray(train_rows, dtype=np.int64)
    if train_rows.size == 0:
        raise DataError("standardization needs a non-empty training row set")
    train = fm.values[train_rows]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    # constant columns can leave a rounding-level std; treat them as flat
    degenerate = train.max(axis=0) == train.min(axis=0)
    std = np.where(degenerate, 0.0, std)
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} constant feature column(s): centered only",
            stacklevel=2,
        )
    scale = np.where(degenerate, 1.0, std)
    return FeatureMatrix(
        values=(fm.values - mean) / scale,
        partition_ref=fm.partition_ref,
        mean=mean,
        std=std,
        degenerate=degenerate,
    )


def apply_standardization(fm: FeatureMatrix, mean: np.ndarray, std: np.ndarray) -> FeatureMatrix:
    """Apply previously computed statistics (e.g. from a saved model)."""
    std = np.asarray(std, dtype=np.float64)
    degenerate = std == 0.0
    scale = np.where(degenerate, 1.0, std)
    return FeatureMatrix(
        values=(fm.values - mean) / scale,
        partition_ref=fm.partition_ref,
        mean=np.asarray(mean, dtype=np.float64),
        std=std,
        degenerate=degenerate,
    )


def export_features_csv(fm: FeatureMatrix, part: BandPartition, path: str) -> None:
    cols = []
    for g in part.groups:
        g = np.sort(g)
        cols.append(f"g{g[0]}-{g[-1]}" if g.size > 1 else f"g{g[0]}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# partition={fm.partition_ref}\n")
        fh.write(",".join(cols) + "\n")
        for row in fm.values:
            fh.write(",".join(format(v, ".9g") for v in row.tolist()) + "\n")
