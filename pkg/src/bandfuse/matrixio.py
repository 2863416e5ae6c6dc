"""Plain-text and PGM exports for dissimilarity-style matrices."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def write_matrix_text(values: np.ndarray, path: str) -> None:
    """One row per line, comma-separated, 9 significant digits."""
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in values:
            fh.write(",".join(format(v, ".9g") for v in row.tolist()))
            fh.write("\n")


def read_matrix_text(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(t) for t in line.split(",")])
    if not rows:
        raise DataError(f"no matrix rows in {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"ragged matrix rows in {path}")
    return np.array(rows, dtype=np.float64)


def write_pgm(values: np.ndarray, path: str) -> None:
    """8-bit binary PGM; entries are expected in [0,1] and clipped if not."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DataError("PGM export needs a 2-D matrix")
    gray = np.rint(255.0 * np.clip(values, 0.0, 1.0)).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise DataError(f"{path} is not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    maxval = int(parts[2])
    raster = np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w)
    return raster.astype(np.float64) / maxval


def write_permutation(perm: np.ndarray, path: str) -> None:
    """Sidecar for reordered matrices: one original index per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in np.asarray(perm).tolist():
            fh.write(f"{int(p)}\n")
