"""Soft-margin SVM on precomputed Gram matrices via SMO.

Dual problem: minimize 1/2 a'Qa - sum(a) with Q_ij = y_i y_j K_ij,
subject to 0 <= a_i <= C and sum(a_i y_i) = 0. Pairs are chosen by
maximal KKT violation with first-index tie-breaking, so runs are fully
deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .kernels import GramKernel


@dataclass(eq=False)
class BinarySvmModel:
    dual_coef: np.ndarray  # alpha_i * y_i per training row
    bias: float
    c_reg: float
    support_indices: np.ndarray
    converged: bool
    iterations: int

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)


def _gram_values(gram) -> np.ndarray:
    return gram.values if isinstance(gram, GramKernel) else np.asarray(gram, dtype=np.float64)


def solve_binary_svm(
    gram,
    labels,
    c_reg: float = 1.0,
    tol: float = 1e-3,
    max_iter: int | None = None,
) -> BinarySvmModel:
    """SMO with maximal-violating-pair working set selection.

    Stops when the duality-gap surrogate m(a) - M(a) drops below tol; if
    the iteration cap is hit first, the model is returned flagged
    non-converged with a warning.
    """
    k = _gram_values(gram)
    y = np.asarray(labels, dtype=np.float64)
    n = y.size
    if k.shape != (n, n):
        raise DataError(f"gram shape {k.shape} does not match {n} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be -1/+1")
    if np.all(y == y[0]):
        raise DataError("both classes must be present")
    if not c_reg > 0:
        raise DataError("c_reg must be positive")
    if max_iter is None:
        max_iter = max(20_000, 200 * n)

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    pos = y > 0

    it = 0
    converged = False
    m_up = m_low = 0.0
    while it < max_iter:
        viol = -y * grad
        up = (pos & (alpha < c_reg)) | (~pos & (alpha > 0.0))
        low = (pos & (alpha > 0.0)) | (~pos & (alpha < c_reg))
        up_viol = np.where(up, viol, -np.inf)
        low_viol = np.where(low, viol, np.inf)
        i = int(np.argmax(up_viol))
        j = int(np.argmin(low_viol))
        m_up, m_low = up_viol[i], low_viol[j]
        if m_up - m_low <= tol:
            converged = True
            break

        quad = k[i, i] + k[j, j] - 2.0 * k[i, j]
        if quad <= 0.0:
            quad = 1e-12
        step = (m_up - m_low) / quad
        cap_i = (c_reg - alpha[i]) if pos[i] else alpha[i]
        cap_j = alpha[j] if pos[j] else (c_reg - alpha[j])
        step = min(step, cap_i, cap_j)

        new_i = alpha[i] + y[i] * step
        new_j = alpha[j] - y[j] * step
        # snap to the box so membership tests stay exact
        alpha[i] = min(max(new_i, 0.0), c_reg)
        alpha[j] = min(max(new_j, 0.0), c_reg)
        grad += step * y * (k[:, i] - k[:, j])
        it += 1

    if not converged:
        warnings.warn(
            f"SMO hit the iteration cap ({max_iter}) with gap "
            f"{m_up - m_low:.3e} > tol {tol:.1e}",
            stacklevel=2,
        )
    bias = float((m_up + m_low) / 2.0)
    return BinarySvmModel(
        dual_coef=alpha * y,
        bias=bias,
        c_reg=c_reg,
        support_indices=np.flatnonzero(alpha > 0.0),
        converged=converged,
        iterations=it,
    )


def decision_values(model: BinarySvmModel, cross_gram) -> np.ndarray:
    """f(e) = sum_i dual_coef_i K(i, e) + bias, for every evaluation column."""
    k = _gram_values(cross_gram)
    if k.shape[0] != model.dual_coef.size:
        raise DataError(
            f"cross gram has {k.shape[0]} anchor rows, model expects {model.dual_coef.size}"
        )
    return model.dual_coef @ k + model.bias


def dual_objective(model: BinarySvmModel, gram, labels) -> float:
    """Value of sum(a) - 1/2 a'Qa for a trained model (for diagnostics)."""
    k = _gram_values(gram)
    beta = model.dual_coef
    alpha = np.abs(beta)
    return float(alpha.sum() - 0.5 * beta @ k @ beta)
