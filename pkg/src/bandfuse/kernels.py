"""Gram matrices over feature rows: RBF and correlation families.

Both kernels have unit self-similarity, so square Grams carry an exact
unit diagonal; rows are computed in fixed blocks so results never depend
on scheduling.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .features import FeatureMatrix

RBF = "rbf"
CORRELATION_KERNEL = "correlation"

_BLOCK = 2048


@dataclass(frozen=True)
class KernelSpec:
    family: str  # "rbf" | "correlation"
    sigma: float

    def __post_init__(self):
        if self.family not in (RBF, CORRELATION_KERNEL):
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")

    def label(self) -> str:
        return f"{self.family}:{format(self.sigma, 'g')}"


@dataclass(eq=False)
class GramKernel:
    """K(a, e) over anchor rows A and evaluation rows E; spec is None for
    weighted combinations."""

    values: np.ndarray
    spec: KernelSpec | None
    square: bool
    rows_a: np.ndarray | None = None
    rows_e: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape


def sigma_grid() -> list[float]:
    """The ten geometric widths 2^-3 .. 2^6."""
    return [float(2.0**k) for k in range(-3, 7)]


def _rows(fm: FeatureMatrix, rows) -> np.ndarray:
    if rows is None:
        return fm.values
    rows = np.asarray(rows, dtype=np.int64)
    return fm.values[rows]


def _finalize_square(values: np.ndarray) -> None:
    lo = np.tril_indices(values.shape[0], -1)
    values[lo] = values.T[lo]
    np.fill_diagonal(values, 1.0)


def _rbf_values(xa: np.ndarray, xe: np.ndarray, sigma: float) -> np.ndarray:
    sq_a = np.einsum("ij,ij->i", xa, xa)
    sq_e = np.einsum("ij,ij->i", xe, xe)
    values = np.empty((xa.shape[0], xe.shape[0]), dtype=np.float64)
    for s in range(0, xa.shape[0], _BLOCK):
        blk = slice(s, min(s + _BLOCK, xa.shape[0]))
        d2 = sq_a[blk, None] + sq_e[None, :] - 2.0 * (xa[blk] @ xe.T)
        np.maximum(d2, 0.0, out=d2)
        values[blk] = np.exp(-d2 / (2.0 * sigma * sigma))
    return values


def _correlation_values(xa: np.ndarray, xe: np.ndarray, sigma: float) -> np.ndarray:
    flat_a = xa.max(axis=1) == xa.min(axis=1)
    flat_e = xe.max(axis=1) == xe.min(axis=1)
    ca = xa - xa.mean(axis=1, keepdims=True)
    ce = xe - xe.mean(axis=1, keepdims=True)
    na = np.sqrt(np.einsum("ij,ij->i", ca, ca))
    ne = np.sqrt(np.einsum("ij,ij->i", ce, ce))
    if flat_a.any() or flat_e.any():
        warnings.warn(
            "zero-variance sample vector(s): correlation set to 0", stacklevel=3
        )
    sa = np.where(flat_a | (na == 0.0), 1.0, na)
    se = np.where(flat_e | (ne == 0.0), 1.0, ne)
    values = np.empty((xa.shape[0], xe.shape[0]), dtype=np.float64)
    for s in range(0, xa.shape[0], _BLOCK):
        blk = slice(s, min(s + _BLOCK, xa.shape[0]))
        corr = (ca[blk] @ ce.T) / np.outer(sa[blk], se)
        np.clip(corr, -1.0, 1.0, out=corr)
        corr[flat_a[blk], :] = 0.0
        corr[:, flat_e] = 0.0
        values[blk] = np.exp(-(1.0 - corr) / (2.0 * sigma * sigma))
    return values


def kernel_values(spec: KernelSpec, xa: np.ndarray, xe: np.ndarray) -> np.ndarray:
    """Raw kernel matrix between two row-sample arrays."""
    fn = _rbf_values if spec.family == RBF else _correlation_values
    return fn(np.asarray(xa, dtype=np.float64), np.asarray(xe, dtype=np.float64), spec.sigma)


def rbf_gram(fm: FeatureMatrix, rows_a, rows_e, sigma: float) -> GramKernel:
    """K(a,e) = exp(-||x_a - x_e||^2 / (2 sigma^2))."""
    return build_gram(fm, rows_a, rows_e, KernelSpec(RBF, float(sigma)))


def correlation_gram(fm: FeatureMatrix, rows_a, rows_e, sigma: float) -> GramKernel:
    """K(a,e) = exp(-(1 - corr(x_a, x_e)) / (2 sigma^2)).

    corr is the Pearson correlation across the feature components of the
    two sample vectors; zero-variance vectors get corr 0 with a warning.
    """
    return build_gram(fm, rows_a, rows_e, KernelSpec(CORRELATION_KERNEL, float(sigma)))


def build_gram(fm: FeatureMatrix, rows_a, rows_e, spec: KernelSpec) -> GramKernel:
    values = kernel_values(spec, _rows(fm, rows_a), _rows(fm, rows_e))
    square = _same_rows(rows_a, rows_e)
    if square:
        _finalize_square(values)
    return GramKernel(
        values=values,
        spec=spec,
        square=square,
        rows_a=None if rows_a is None else np.asarray(rows_a, dtype=np.int64),
        rows_e=None if rows_e is None else np.asarray(rows_e, dtype=np.int64),
    )


def _same_rows(rows_a, rows_e) -> bool:
    if rows_a is None and rows_e is None:
        return True
    if rows_a is None or rows_e is None:
        return False
    return np.array_equal(np.asarray(rows_a), np.asarray(rows_e))


def normalize_kernel(
    k: GramKernel,
    diag_a: np.ndarray | None = None,
    diag_e: np.ndarray | None = None,
    center_means: tuple[np.ndarray, float] | None = None,
) -> GramKernel:
    """Spherical normalization K / sqrt(K(a,a) K(e,e)), optionally followed
    by centering with training-side means.

    For square Grams the diagonals default to the Gram's own; both kernel
    families here already give unit diagonals, making this an identity.
    """
    if diag_a is None or diag_e is None:
        if not k.square:
            raise DataError("cross Grams need explicit diagonal self-similarities")
        diag_a = diag_e = np.diag(k.values)
    diag_a = np.asarray(diag_a, dtype=np.float64)
    diag_e = np.asarray(diag_e, dtype=np.float64)
    if np.any(diag_a == 0) or np.any(diag_e == 0):
        raise DataError("zero diagonal entry: cannot normalize kernel")
    values = k.values / np.sqrt(np.outer(diag_a, diag_e))
    if center_means is not None:
        col_means, grand = center_means
        values = values - values.mean(axis=0, keepdims=True) - col_means[:, None] + grand
    if k.square:
        _finalize_square(values)
    return GramKernel(values=values, spec=k.spec, square=k.square, rows_a=k.rows_a, rows_e=k.rows_e)


def min_eigenvalue(k: GramKernel) -> float:
    return float(np.linalg.eigvalsh(k.values).min())


def is_numerically_psd(k: GramKernel, factor: float = 1e-8) -> bool:
    """min eigenvalue >= -factor * trace."""
    if not k.square:
        raise DataError("PSD check applies to square Grams")
    return min_eigenvalue(k) >= -factor * float(np.trace(k.values))


def feature_content_hash(fm: FeatureMatrix) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(fm.values).tobytes())
    return h.hexdigest()


def save_gram(k: GramKernel, path: str, feature_hash: str = "") -> None:
    """Row-major little-endian float64 block plus a text sidecar."""
    np.ascontiguousarray(k.values, dtype="<f8").tofile(path)
    with open(path + ".meta", "w", encoding="utf-8") as fh:
        spec = k.spec.label() if k.spec is not None else "combined"
        fh.write(f"spec = {spec}\n")
        fh.write(f"shape = {k.values.shape[0]} {k.values.shape[1]}\n")
        fh.write(f"square = {int(k.square)}\n")
        rows_a = " ".join(map(str, k.rows_a.tolist())) if k.rows_a is not None else "all"
        rows_e = " ".join(map(str, k.rows_e.tolist())) if k.rows_e is not None else "all"
        fh.write(f"rows_a = {rows_a}\n")
        fh.write(f"rows_e = {rows_e}\n")
        fh.write(f"feature_hash = {feature_hash}\n")


def load_gram(path: str, expected_feature_hash: str | None = None) -> GramKernel:
    meta: dict[str, str] = {}
    with open(path + ".meta", "r", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, val = (s.strip() for s in line.split("=", 1))
                meta[key] = val
    if expected_feature_hash is not None and meta.get("feature_hash") != expected_feature_hash:
        raise DataError("gram cache does not match the feature matrix content")
    rows, cols = (int(t) for t in meta["shape"].split())
    values = np.fromfile(path, dtype="<f8").reshape(rows, cols)
    spec = None
    if meta.get("spec", "combined") != "combined":
        family, sig = meta["spec"].split(":")
        spec = KernelSpec(family, float(sig))

    def _rows_field(name):
        raw = meta.get(name, "all")
        return None if raw == "all" else np.array([int(t) for t in raw.split()], dtype=np.int64)

    return GramKernel(
        values=values,
        spec=spec,
        square=bool(int(meta.get("square", "0"))),
        rows_a=_rows_field("rows_a"),
        rows_e=_rows_field("rows_e"),
    )
