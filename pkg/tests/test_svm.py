import numpy as np
import pytest

from bandfuse.errors import DataError
from bandfuse.svm import BinarySvmModel, decision_values, dual_objective, solve_binary_svm

import oracles


def random_problem(rng, n):
    x = rng.normal(size=(n, 3))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    gram = x @ x.T + 1e-9 * np.eye(n)
    return gram, y


class TestSolveBinarySvm:
    def test_two_point_analytic(self):
        gram = np.array([[1.0, -1.0], [-1.0, 1.0]])
        y = np.array([1.0, -1.0])
        model = solve_binary_svm(gram, y, c_reg=100.0, tol=1e-6)
        f = decision_values(model, gram)
        np.testing.assert_allclose(f, [1.0, -1.0], atol=1e-6)
        assert dual_objective(model, gram, y) == pytest.approx(0.5, abs=1e-6)

    def test_matches_qp_oracle(self, rng):
        worst = 0.0
        for _ in range(30):
            n = int(rng.integers(4, 13))
            gram, y = random_problem(rng, n)
            c = float(rng.choice([0.5, 1.0, 10.0]))
            model = solve_binary_svm(gram, y, c_reg=c, tol=1e-6)
            _, obj = oracles.qp_dual_oracle(gram, y, c, iters=30000)
            worst = max(worst, abs(dual_objective(model, gram, y) - obj))
        assert worst < 1e-4

    def test_duplicated_points_halved_c(self, rng):
        n = 10
        gram, y = random_problem(rng, n)
        base = solve_binary_svm(gram, y, c_reg=1.0, tol=1e-8)
        dup_idx = np.concatenate([np.arange(n), np.arange(n)])
        gram2 = gram[np.ix_(dup_idx, dup_idx)]
        y2 = y[dup_idx]
        doubled = solve_binary_svm(gram2, y2, c_reg=0.5, tol=1e-8)
        f_base = decision_values(base, gram)
        f_doubled = decision_values(doubled, gram2[:, :n])
        np.testing.assert_allclose(f_doubled, f_base, atol=1e-6)

    def test_dual_feasibility_invariants(self, rng):
        for _ in range(10):
            gram, y = random_problem(rng, 20)
            c = 2.5
            model = solve_binary_svm(gram, y, c_reg=c, tol=1e-4)
            alphas = model.alphas
            assert np.all(alphas >= 0.0) and np.all(alphas <= c)
            assert abs(float(model.dual_coef.sum())) <= 1e-8 * c
            assert model.converged

    def test_one_class_rejected(self):
        with pytest.raises(DataError, match="both classes"):
            solve_binary_svm(np.eye(3), np.array([1.0, 1.0, 1.0]))

    def test_iteration_cap_flags_nonconverged(self, rng):
        gram, y = random_problem(rng, 30)
        with pytest.warns(UserWarning, match="iteration cap"):
            model = solve_binary_svm(gram, y, c_reg=1.0, tol=1e-12, max_iter=3)
        assert not model.converged

    def test_separable_blobs_perfect_train_accuracy(self, rng):
        n = 40
        x = np.vstack([rng.normal(size=(n // 2, 2)) + 4.0, rng.normal(size=(n // 2, 2)) - 4.0])
        y = np.array([1.0] * (n // 2) + [-1.0] * (n // 2))
        gram = x @ x.T
        model = solve_binary_svm(gram, y, c_reg=10.0, tol=1e-5)
        assert np.all(np.sign(decision_values(model, gram)) == y)


class TestDecisionValues:
    def test_support_vector_signs_on_separable(self, rng):
        x = np.vstack([rng.normal(size=(8, 2)) + 3.0, rng.normal(size=(8, 2)) - 3.0])
        y = np.array([1.0] * 8 + [-1.0] * 8)
        gram = x @ x.T
        model = solve_binary_svm(gram, y, c_reg=5.0, tol=1e-6)
        f = decision_values(model, gram)
        for i in model.support_indices:
            assert np.sign(f[i]) == y[i]

    def test_zero_coefficients_constant_bias(self):
        model = BinarySvmModel(
            dual_coef=np.zeros(4),
            bias=0.37,
            c_reg=1.0,
            support_indices=np.array([], dtype=np.int64),
            converged=True,
            iterations=0,
        )
        f = decision_values(model, np.random.default_rng(0).random((4, 6)))
        np.testing.assert_array_equal(f, np.full(6, 0.37))

    def test_matches_loop_oracle(self, rng):
        n_train, n_eval = 9, 7
        cross = rng.normal(size=(n_train, n_eval))
        model = BinarySvmModel(
            dual_coef=rng.normal(size=n_train),
            bias=-0.2,
            c_reg=1.0,
            support_indices=np.arange(n_train),
            converged=True,
            iterations=5,
        )
        f = decision_values(model, cross)
        expected = oracles.decision_loop(model.dual_coef, model.bias, cross)
        assert np.abs(f - expected).max() < 1e-12

    def test_shape_mismatch(self, rng):
        model = BinarySvmModel(
            dual_coef=np.zeros(4),
            bias=0.0,
            c_reg=1.0,
            support_indices=np.array([], dtype=np.int64),
            converged=True,
            iterations=0,
        )
        with pytest.raises(DataError):
            decision_values(model, rng.random((5, 2)))
