"""Flattened hyperspectral datasets: loading, band/class filtering, seeded splits.

A dataset is a plain pixel-by-band matrix. Each row is one labeled pixel,
each column one spectral band. Unlabeled pixels (ground-truth id 0) are
dropped at load time, so every row carries a class id in {1..L}.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError


@dataclass
class HsiDataset:
    """Pixel matrix (n x b) with dense class labels 1..L.

    band_ids keeps the original sensor band numbers (1-based) so that
    exclusion lists written against the sensor survive column dropping.
    original_class_ids maps each dense label back to the id it had before
    class filtering.
    """

    pixels: np.ndarray
    labels: np.ndarray
    band_ids: np.ndarray
    class_names: list[str] | None = None
    original_class_ids: np.ndarray | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.band_ids = np.asarray(self.band_ids, dtype=np.int64)
        if self.pixels.ndim != 2:
            raise DataError("pixel matrix must be 2-D")
        if self.pixels.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.pixels.shape[0]} pixel rows but {self.labels.shape[0]} labels"
            )
        if self.band_ids.shape[0] != self.pixels.shape[1]:
            raise DataError("band_ids length must equal the band count")
        if np.any(np.diff(self.band_ids) <= 0):
            raise DataError("band_ids must be strictly increasing")
        if not np.all(np.isfinite(self.pixels)):
            r, c = np.argwhere(~np.isfinite(self.pixels))[0]
            raise DataError(f"non-finite pixel value at row {r + 1}, column {c + 1}")
        if self.n_rows and self.labels.min() < 1:
            raise DataError("labels must be >= 1 after unlabeled pixels are dropped")
        missing = self.missing_classes()
        if missing:
            raise DataError(f"classes {missing} have no samples")

    @property
    def n_rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def n_bands(self) -> int:
        return self.pixels.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def missing_classes(self) -> list[int]:
        present = set(np.unique(self.labels).tolist())
        return [c for c in range(1, self.n_classes + 1) if c not in present]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]


@dataclass(frozen=True)
class SplitSpec:
    """Seeded stratified train/validation/test split.

    train_fraction is the share of each class that forms the training
    portion; validation_fraction_of_train is carved back out of it.
    """

    seed: int
    train_fraction: float
    validation_fraction_of_train: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if not 0.0 <= self.validation_fraction_of_train < 1.0:
            raise ConfigError("validation_fraction_of_train must lie in [0, 1)")


def _parse_float(tok: str, row: int, col: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DataError(f"cannot parse value {tok!r} at row {row}, column {col}") from None
    if not np.isfinite(v):
        raise DataError(f"non-finite pixel value at row {row}, column {col}")
    return v


def _load_csv(path: str) -> HsiDataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 3:
            raise DataError(f"malformed header {header!r}: expected 'n,b,L'")
        try:
            n, b, n_classes = (int(p) for p in parts)
        except ValueError:
            raise DataError(f"malformed header {header!r}: expected three integers") from None
        if n < 1 or b < 1 or n_classes < 1:
            raise DataError(f"malformed header {header!r}: counts must be positive")

        pixels = np.empty((n, b), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        row = 0
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if row >= n:
                raise DataError(f"more than the declared {n} data rows")
            toks = line.split(",")
            if len(toks) != b + 1:
                raise DataError(
                    f"row {row + 1} has {len(toks)} fields, expected {b} bands + 1 label"
                )
            for col in range(b):
                pixels[row, col] = _parse_float(toks[col], row + 1, col + 1)
            try:
                lab = int(toks[b])
            except ValueError:
                raise DataError(f"row {row + 1}: label {toks[b]!r} is not an integer") from None
            if lab < 0 or lab > n_classes:
                raise DataError(
                    f"row {row + 1}: label {lab} outside 0..{n_classes} (0 = unlabeled)"
                )
            labels[row] = lab
            row += 1
        if row != n:
            raise DataError(f"expected {n} data rows, found {row}")

    keep = labels > 0
    if not keep.any():
        raise DataError("every pixel is unlabeled")
    return HsiDataset(
        pixels=pixels[keep],
        labels=labels[keep],
        band_ids=np.arange(1, b + 1),
    )


def _read_cube_header(path: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"malformed cube header line {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            fields[key] = val
    for key in ("rows", "cols", "bands", "label_file"):
        if key not in fields:
            raise DataError(f"cube header missing required key {key!r}")
    return fields


def _load_raw_cube(path: str) -> HsiDataset:
    """Binary cube at `path`, text header at `path + '.hdr'`.

    Cube layout is band-interleaved-by-pixel float32 little-endian; the
    label raster is int32 little-endian with 0 marking unlabeled pixels.
    """
    header = _read_cube_header(path + ".hdr")
    rows, cols, bands = (int(header[k]) for k in ("rows", "cols", "bands"))
    if rows < 1 or cols < 1 or bands < 1:
        raise DataError("cube header dimensions must be positive")
    n = rows * cols

    cube = np.fromfile(path, dtype="<f4")
    if cube.size != n * bands:
        raise DataError(
            f"cube file holds {cube.size} floats, expected rows*cols*bands = {n * bands}"
        )
    label_path = os.path.join(os.path.dirname(os.path.abspath(path)), header["label_file"])
    labels = np.fromfile(label_path, dtype="<i4")
    if labels.size != n:
        raise DataError(f"label raster holds {labels.size} values, expected {n}")

    pixels = cube.astype(np.float64).reshape(n, bands)
    if not np.all(np.isfinite(pixels)):
        r, c = np.argwhere(~np.isfinite(pixels))[0]
        raise DataError(f"non-finite pixel value at row {r + 1}, column {c + 1}")
    keep = labels > 0
    if not keep.any():
        raise DataError("every pixel is unlabeled")
    return HsiDataset(
        pixels=pixels[keep],
        labels=labels[keep].astype(np.int64),
        band_ids=np.arange(1, bands + 1),
    )


def load_dataset(path: str, format: str = "csv") -> HsiDataset:
    """Load a dataset from HSI-CSV or a raw binary cube."""
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    if format == "csv":
        return _load_csv(path)
    if format == "raw-cube":
        return _load_raw_cube(path)
    raise ConfigError(f"unknown dataset format {format!r}")


def save_dataset(ds: HsiDataset, path: str) -> None:
    """Write HSI-CSV; floats use repr so a reload reproduces them exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{ds.n_rows},{ds.n_bands},{ds.n_classes}\n")
        for r in range(ds.n_rows):
            vals = ",".join(repr(v) for v in ds.pixels[r].tolist())
            fh.write(f"{vals},{ds.labels[r]}\n")


def apply_band_exclusion(ds: HsiDataset, excluded) -> HsiDataset:
    """Drop the listed sensor band ids; row count is unchanged."""
    excluded = np.asarray(sorted(set(int(e) for e in excluded)), dtype=np.int64)
    if excluded.size == 0:
        return replace(ds)
    unknown = np.setdiff1d(excluded, ds.band_ids)
    if unknown.size:
        raise DataError(f"unknown band ids in exclusion list: {unknown.tolist()}")
    keep = ~np.isin(ds.band_ids, excluded)
    if not keep.any():
        raise DataError("excluding all bands would leave an empty dataset")
    return replace(ds, pixels=ds.pixels[:, keep], band_ids=ds.band_ids[keep])


def filter_classes(ds: HsiDataset, keep) -> HsiDataset:
    """Keep the listed classes and re-densify labels to 1..|keep|.

    Relabeling preserves the original class order; the original ids are
    recorded so predictions can be mapped back.
    """
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise DataError("class keep-set is empty")
    present = set(np.unique(ds.labels).tolist())
    absent = [k for k in keep if k not in present]
    if absent:
        raise DataError(f"classes {absent} not present in the dataset")

    mask = np.isin(ds.labels, keep)
    relabel = {old: new for new, old in enumerate(keep, start=1)}
    new_labels = np.array([relabel[int(v)] for v in ds.labels[mask]], dtype=np.int64)
    base_ids = ds.original_class_ids
    if base_ids is None:
        base_ids = np.arange(1, ds.n_classes + 1)
    names = None
    if ds.class_names is not None:
        names = [ds.class_names[k - 1] for k in keep]
    return HsiDataset(
        pixels=ds.pixels[mask],
        labels=new_labels,
        band_ids=ds.band_ids.copy(),
        class_names=names,
        original_class_ids=np.array([base_ids[k - 1] for k in keep], dtype=np.int64),
    )


def _take(count_float: float) -> int:
    # round-half-up keeps per-class counts within +-1 of the requested fraction
    return int(count_float + 0.5)


def make_split(ds: HsiDataset, spec: SplitSpec):
    """Stratified per-class split into (train, validation, test) row indices.

    Validation rows are carved out of the training portion. Deterministic:
    the same (dataset, spec) always yields the same index arrays.
    """
    rng = np.random.default_rng(spec.seed)
    train_parts, val_parts, test_parts = [], [], []
    for cls in range(1, ds.n_classes + 1):
        rows = np.flatnonzero(ds.labels == cls)
        perm = rows[rng.permutation(rows.size)]
        n_portion = _take(rows.size * spec.train_fraction)
        n_val = _take(n_portion * spec.validation_fraction_of_train)
        n_train = n_portion - n_val
        n_test = rows.size - n_portion
        if n_train < 1 or n_test < 1:
            raise DataError(
                f"class {cls} has {rows.size} samples: too few for train and test"
            )
        if spec.validation_fraction_of_train > 0 and n_val < 1:
            raise DataError(f"class {cls} too small to appear in the validation split")
        train_parts.append(perm[:n_train])
        val_parts.append(perm[n_train:n_portion])
        test_parts.append(perm[n_portion:])
    train = np.sort(np.concatenate(train_parts))
    val = np.sort(np.concatenate(val_parts)) if val_parts else np.array([], dtype=np.int64)
    test = np.sort(np.concatenate(test_parts))
    return train, val, test
