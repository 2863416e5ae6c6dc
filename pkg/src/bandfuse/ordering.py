"""VAT band reordering and the iVAT minimax-path contrast enhancement.

VAT orders bands along a Prim-style minimum-spanning-tree traversal so
similar bands end up adjacent; iVAT replaces each entry with a bottleneck
(path-maximum) distance, which flattens blocks to near-constant intensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .proximity import DissimilarityMatrix


@dataclass(eq=False)
class VatResult:
    """Ordering permutation (display position -> original index) plus the
    reordered matrix."""

    permutation: np.ndarray
    ordered_dm: DissimilarityMatrix


@dataclass(eq=False)
class EnhancedDm:
    values: np.ndarray
    source: str  # "raw" | "vat_ordered"

    @property
    def n_bands(self) -> int:
        return self.values.shape[0]


def _check_symmetric(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DataError("expected a square matrix")
    if not np.array_equal(values, values.T):
        raise DataError("matrix is not symmetric")
    return values


def vat_order(dm: DissimilarityMatrix) -> VatResult:
    """Prim-style reordering seeded at the first endpoint of a max-distance pair.

    Ties in both the seeding argmax and the per-step argmin are broken by
    smallest row index, then smallest column index (row-major scan order),
    so the permutation is deterministic.
    """
    values = _check_symmetric(dm.values)
    b = values.shape[0]
    if b < 2:
        raise DataError("VAT ordering needs at least 2 bands")

    perm = np.empty(b, dtype=np.int64)
    seed = int(np.argmax(values)) // b
    perm[0] = seed
    visited = np.zeros(b, dtype=bool)
    visited[seed] = True

    for r in range(1, b):
        crossing = np.where(visited[:, None] & ~visited[None, :], values, np.inf)
        nxt = int(np.argmin(crossing)) % b
        perm[r] = nxt
        visited[nxt] = True

    ordered = values[np.ix_(perm, perm)]
    return VatResult(
        permutation=perm,
        ordered_dm=DissimilarityMatrix(
            values=ordered,
            measure=dm.measure,
            normalized=dm.normalized,
            ordering=dm.ordering[perm],
        ),
    )


def ivat_enhance(dm, source: str | None = None) -> EnhancedDm:
    """Recursive minimax update over rows 2..b.

    Each row attaches to its nearest already-processed band and inherits
    that band's enhanced distances capped from below by the attaching
    edge. The working matrix is kept symmetric as rows complete, which is
    what makes the recursion's column lookups well defined.
    """
    if isinstance(dm, DissimilarityMatrix):
        values = dm.values
        if source is None:
            source = "raw" if np.array_equal(dm.ordering, np.arange(dm.n_bands)) else "vat_ordered"
    elif isinstance(dm, EnhancedDm):
        values = dm.values
        source = source or dm.source
    else:
        values = dm
        source = source or "raw"
    values = _check_symmetric(values)
    b = values.shape[0]

    enhanced = np.zeros_like(values)
    for r in range(1, b):
        j = int(np.argmin(values[r, :r]))
        row = np.maximum(values[r, j], enhanced[j, :r])
        row[j] = values[r, j]
        enhanced[r, :r] = row
        enhanced[:r, r] = row
    return EnhancedDm(values=enhanced, source=source)
