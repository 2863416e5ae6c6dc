"""Multiple kernel learning: lp-norm weight optimization and the plain
sum-kernel special case, plus one-vs-rest multiclass on top.

The lp path alternates an SVM solve on the weighted-sum Gram with the
closed-form weight rebalancing w_m ~ eta_m^(1/(p+1)) normalized to unit
lp norm, where eta_m is the per-kernel squared RKHS norm of the current
solution. The sum kernel (p = inf) fixes every weight at 1 and needs a
single solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kernels import GramKernel, KernelSpec
from .svm import BinarySvmModel, decision_values, solve_binary_svm


@dataclass(eq=False)
class MklModel:
    kernel_weights: np.ndarray
    p_norm: float  # math.inf for the sum kernel
    inner_svm: BinarySvmModel
    kernel_specs: list[tuple[str, KernelSpec | None]]
    converged: bool
    outer_iterations: int

    def decide(self, cross_grams) -> np.ndarray:
        combined = combine_kernels(cross_grams, self.kernel_weights)
        return decision_values(self.inner_svm, combined)


@dataclass(eq=False)
class OvrEnsemble:
    """One binary model per class, all trained on the same rows."""

    models: list
    n_classes: int


def _values_list(grams) -> list[np.ndarray]:
    out = []
    for g in grams:
        out.append(g.values if isinstance(g, GramKernel) else np.asarray(g, dtype=np.float64))
    shapes = {v.shape for v in out}
    if len(shapes) != 1:
        raise DataError(f"kernels must share row sets, got shapes {sorted(shapes)}")
    return out


def _specs_list(grams) -> list[tuple[str, KernelSpec | None]]:
    specs = []
    for idx, g in enumerate(grams):
        if isinstance(g, GramKernel) and g.spec is not None:
            specs.append((f"k{idx}", g.spec))
        else:
            specs.append((f"k{idx}", None))
    return specs


def combine_kernels(grams, weights) -> GramKernel:
    """K = sum_m w_m K_m; sums of PSD matrices with w_m >= 0 stay PSD."""
    values = _values_list(grams)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size != len(values):
        raise DataError(f"{weights.size} weights for {len(values)} kernels")
    if np.any(weights < 0):
        raise DataError("kernel weights must be non-negative")
    acc = np.zeros_like(values[0])
    for w, v in zip(weights, values):
        acc += w * v
    square = all(isinstance(g, GramKernel) and g.square for g in grams)
    return GramKernel(values=acc, spec=None, square=square)


def train_lp_mkl(
    grams,
    labels,
    p: float,
    c_reg: float = 1.0,
    tol: float = 1e-3,
    weight_tol: float = 1e-4,
    max_outer: int = 100,
) -> MklModel:
    """Alternating optimization for finite p > 1."""
    if not (1.0 < p < math.inf):
        raise DataError("lp-norm MKL needs a finite p > 1")
    values = _values_list(grams)
    m = len(values)
    w = np.full(m, m ** (-1.0 / p))

    model = None
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        combined = sum(wi * vi for wi, vi in zip(w, values))
        model = solve_binary_svm(combined, labels, c_reg=c_reg, tol=tol)
        beta = model.dual_coef
        eta = np.array([w[k] ** 2 * float(beta @ values[k] @ beta) for k in range(m)])
        if not np.any(eta > 0):
            converged = True
            break
        new_w = eta ** (1.0 / (p + 1.0))
        new_w /= float(np.sum(eta ** (p / (p + 1.0)))) ** (1.0 / p)
        change = float(np.max(np.abs(new_w - w) / np.maximum(np.abs(w), 1e-300)))
        w = new_w
        if change < weight_tol:
            converged = True
            break
    combined = sum(wi * vi for wi, vi in zip(w, values))
    model = solve_binary_svm(combined, labels, c_reg=c_reg, tol=tol)
    return MklModel(
        kernel_weights=w,
        p_norm=p,
        inner_svm=model,
        kernel_specs=_specs_list(grams),
        converged=converged and model.converged,
        outer_iterations=outer,
    )


def train_linf_mkl(grams, labels, c_reg: float = 1.0, tol: float = 1e-3) -> MklModel:
    """Sum kernel: unit weights, one SVM solve, no weight iteration."""
    values = _values_list(grams)
    combined = sum(values[1:], start=values[0].copy())
    model = solve_binary_svm(combined, labels, c_reg=c_reg, tol=tol)
    return MklModel(
        kernel_weights=np.ones(len(values)),
        p_norm=math.inf,
        inner_svm=model,
        kernel_specs=_specs_list(grams),
        converged=model.converged,
        outer_iterations=1,
    )


def train_mkl(grams, labels, p: float, c_reg: float = 1.0, tol: float = 1e-3) -> MklModel:
    if math.isinf(p):
        return train_linf_mkl(grams, labels, c_reg=c_reg, tol=tol)
    return train_lp_mkl(grams, labels, p, c_reg=c_reg, tol=tol)


def train_ovr(
    grams,
    labels,
    trainer: str = "svm",
    p: float | None = None,
    c_reg: float = 1.0,
    tol: float = 1e-3,
) -> OvrEnsemble:
    """Train one class-vs-rest model per class id 1..L.

    trainer "svm" expects a single Gram; "lp_mkl" and "linf_mkl" take the
    full list. Kernel weights are learned independently per class.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max())
    if n_classes < 2:
        raise DataError("one-vs-rest needs at least 2 classes")
    if isinstance(grams, GramKernel) or isinstance(grams, np.ndarray):
        grams = [grams]
    models = []
    for cls in range(1, n_classes + 1):
        y = np.where(labels == cls, 1.0, -1.0)
        if trainer == "svm":
            if len(grams) != 1:
                raise DataError("plain SVM trainer expects exactly one kernel")
            models.append(solve_binary_svm(grams[0], y, c_reg=c_reg, tol=tol))
        elif trainer == "lp_mkl":
            if p is None:
                raise DataError("lp_mkl trainer needs p")
            models.append(train_lp_mkl(grams, y, p, c_reg=c_reg, tol=tol))
        elif trainer == "linf_mkl":
            models.append(train_linf_mkl(grams, y, c_reg=c_reg, tol=tol))
        else:
            raise DataError(f"unknown trainer {trainer!r}")
    return OvrEnsemble(models=models, n_classes=n_classes)


def ovr_decision_matrix(ensemble: OvrEnsemble, cross_grams) -> np.ndarray:
    """Rows = evaluation samples, columns = class decision values."""
    if isinstance(cross_grams, GramKernel) or isinstance(cross_grams, np.ndarray):
        cross_grams = [cross_grams]
    cols = []
    for model in ensemble.models:
        if isinstance(model, MklModel):
            cols.append(model.decide(cross_grams))
        else:
            if len(cross_grams) != 1:
                raise DataError("plain SVM model expects exactly one cross gram")
            cols.append(decision_values(model, cross_grams[0]))
    return np.stack(cols, axis=1)


def predict(ensemble: OvrEnsemble, cross_grams) -> np.ndarray:
    """Class with the highest decision value; ties go to the smallest id."""
    scores = ovr_decision_matrix(ensemble, cross_grams)
    return np.argmax(scores, axis=1) + 1
