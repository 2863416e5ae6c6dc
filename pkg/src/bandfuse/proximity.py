"""Band-by-band dissimilarity matrices and their [0,1] normalization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .datasets import HsiDataset
from .errors import DataError

SQUARED_EUCLIDEAN = "squared_euclidean"
CORRELATION = "correlation"


@dataclass(eq=False)
class DissimilarityMatrix:
    """Symmetric b x b matrix of non-negative band dissimilarities.

    `ordering` is the permutation of band positions currently applied
    (identity for a freshly computed matrix).
    """

    values: np.ndarray
    measure: str
    normalized: bool = False
    ordering: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        b = self.values.shape[0]
        if self.values.ndim != 2 or self.values.shape[1] != b:
            raise DataError("dissimilarity matrix must be square")
        if self.ordering is None:
            self.ordering = np.arange(b)
        else:
            self.ordering = np.asarray(self.ordering, dtype=np.int64)

    @property
    def n_bands(self) -> int:
        return self.values.shape[0]


def _mirror_upper(m: np.ndarray) -> None:
    """Copy the upper triangle onto the lower one (exact symmetry)."""
    lo = np.tril_indices(m.shape[0], -1)
    m[lo] = m.T[lo]


def _select_rows(ds: HsiDataset, rows) -> np.ndarray:
    if rows is None:
        return ds.pixels
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("row set for dissimilarity computation is empty")
    return ds.pixels[rows]


def squared_euclidean_dm(ds: HsiDataset, rows=None) -> DissimilarityMatrix:
    """D(i,j) = sum over rows of (X[r,i] - X[r,j])^2, computed pair by pair.

    The per-pair accumulation avoids the cancellation the Gram expansion
    would introduce; rows=None uses every pixel.
    """
    x = _select_rows(ds, rows)
    b = x.shape[1]
    d = np.zeros((b, b), dtype=np.float64)
    for i in range(b - 1):
        diff = x[:, i + 1 :] - x[:, i : i + 1]
        d[i, i + 1 :] = np.einsum("rj,rj->j", diff, diff)
    _mirror_upper(d)
    return DissimilarityMatrix(values=d, measure=SQUARED_EUCLIDEAN)


def correlation_dm(ds: HsiDataset, rows=None) -> DissimilarityMatrix:
    """D(i,j) = 1 - Pearson correlation of band columns i and j.

    Zero-variance bands have undefined correlation; they are assigned
    correlation 0 (distance 1 to every other band) with a warning.
    """
    x = _select_rows(ds, rows)
    b = x.shape[1]
    # a constant column may not center to exactly zero in floating point
    degenerate = x.max(axis=0) == x.min(axis=0)
    centered = x - x.mean(axis=0)
    norms = np.sqrt(np.einsum("ri,ri->i", centered, centered))
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} zero-variance band(s): correlation set to 0",
            stacklevel=2,
        )
    safe = np.where(degenerate | (norms == 0.0), 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    np.clip(corr, -1.0, 1.0, out=corr)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    d = 1.0 - corr
    np.fill_diagonal(d, 0.0)
    _mirror_upper(d)
    return DissimilarityMatrix(values=d, measure=CORRELATION)


def normalize_dm(dm: DissimilarityMatrix) -> DissimilarityMatrix:
    """Scale entries by the maximum off-diagonal entry so all lie in [0,1].

    All-zero matrices pass through unchanged. Applying this twice is an
    exact no-op (the second pass divides by 1).
    """
    mx = float(dm.values.max())
    values = dm.values.copy() if mx == 0.0 else dm.values / mx
    return DissimilarityMatrix(
        values=values,
        measure=dm.measure,
        normalized=True,
        ordering=dm.ordering.copy(),
    )
