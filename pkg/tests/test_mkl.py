import math
import time

import numpy as np
import pytest

from bandfuse.errors import DataError
from bandfuse.kernels import GramKernel, is_numerically_psd
from bandfuse.mkl import (
    combine_kernels,
    ovr_decision_matrix,
    predict,
    train_linf_mkl,
    train_lp_mkl,
    train_ovr,
)
from bandfuse.svm import decision_values, solve_binary_svm


def rbf_kernel_of(x, sigma=2.0):
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2 * sigma**2))


def labeled_blobs(rng, n_per=15, classes=2, sep=4.0):
    xs, ys = [], []
    for cls in range(classes):
        center = rng.normal(size=2) * 0.1 + sep * np.array(
            [np.cos(2 * np.pi * cls / classes), np.sin(2 * np.pi * cls / classes)]
        )
        xs.append(rng.normal(size=(n_per, 2)) + center)
        ys.append(np.full(n_per, cls + 1))
    return np.vstack(xs), np.concatenate(ys)


class TestCombineKernels:
    def test_single_kernel_identity(self, rng):
        k = rbf_kernel_of(rng.normal(size=(6, 2)))
        out = combine_kernels([k], [1.0])
        np.testing.assert_array_equal(out.values, k)

    def test_two_equal_kernels_double(self, rng):
        k = rbf_kernel_of(rng.normal(size=(6, 2)))
        out = combine_kernels([k, k], [1.0, 1.0])
        np.testing.assert_allclose(out.values, 2.0 * k, atol=0)

    def test_random_weights_stay_psd(self, rng):
        ks = [rbf_kernel_of(rng.normal(size=(10, 3)), s) for s in (0.5, 1.0, 4.0)]
        w = rng.uniform(0, 2, size=3)
        out = combine_kernels(
            [GramKernel(values=k, spec=None, square=True) for k in ks], w
        )
        assert is_numerically_psd(out)

    def test_negative_weight_rejected(self, rng):
        k = rbf_kernel_of(rng.normal(size=(4, 2)))
        with pytest.raises(DataError):
            combine_kernels([k], [-0.1])

    def test_shape_mismatch(self, rng):
        with pytest.raises(DataError):
            combine_kernels([np.eye(3), np.eye(4)], [1.0, 1.0])


class TestLpMkl:
    def test_identical_kernels_symmetric_weights(self, rng):
        x = rng.normal(size=(20, 3))
        y = np.where(rng.random(20) < 0.5, 1.0, -1.0)
        y[:2] = [1.0, -1.0]
        k = rbf_kernel_of(x)
        for p in (1.01, 2.0, 100.0):
            model = train_lp_mkl([k, k, k, k], y, p=p, tol=1e-5)
            target = 4.0 ** (-1.0 / p)
            assert np.abs(model.kernel_weights - target).max() < 1e-6
            norm = float(np.sum(model.kernel_weights**p)) ** (1.0 / p)
            assert norm == pytest.approx(1.0, abs=1e-6)

    def test_informative_beats_noise_kernel(self):
        wins = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x, labels = labeled_blobs(rng, n_per=20, classes=2, sep=3.0)
            y = np.where(labels == 1, 1.0, -1.0)
            informative = rbf_kernel_of(x)
            noise = rbf_kernel_of(rng.normal(size=x.shape))
            model = train_lp_mkl([informative, noise], y, p=1.01, tol=1e-4)
            if model.kernel_weights[0] > model.kernel_weights[1]:
                wins += 1
        assert wins >= 9

    def test_p100_close_to_sum_kernel_decisions(self, rng):
        x, labels = labeled_blobs(rng, n_per=20, classes=2, sep=2.0)
        y = np.where(labels == 1, 1.0, -1.0)
        kernels = [rbf_kernel_of(x, s) for s in (0.5, 1.0, 2.0, 8.0)]
        xe = rng.normal(size=(30, 2)) * 2.0
        crosses = [
            np.exp(-((x[:, None, :] - xe[None, :, :]) ** 2).sum(-1) / (2 * s**2))
            for s in (0.5, 1.0, 2.0, 8.0)
        ]
        m100 = train_lp_mkl(kernels, y, p=100.0, tol=1e-5)
        minf = train_linf_mkl(kernels, y, tol=1e-5)
        f100 = m100.decide(crosses)
        finf = minf.decide(crosses)
        scale = np.abs(finf).max()
        assert np.abs(f100 - finf).max() <= 0.02 * scale

    def test_invalid_p(self, rng):
        k = rbf_kernel_of(rng.normal(size=(6, 2)))
        y = np.array([1.0, -1.0] * 3)
        with pytest.raises(DataError):
            train_lp_mkl([k], y, p=1.0)


class TestLinfMkl:
    def test_bit_identical_to_sum_gram_svm(self, rng):
        x, labels = labeled_blobs(rng, n_per=12, classes=2, sep=2.5)
        y = np.where(labels == 1, 1.0, -1.0)
        kernels = [rbf_kernel_of(x, s) for s in (0.5, 2.0, 8.0)]
        model = train_linf_mkl(kernels, y, tol=1e-4)
        summed = kernels[0] + kernels[1] + kernels[2]
        direct = solve_binary_svm(summed, y, tol=1e-4)
        assert np.array_equal(model.inner_svm.dual_coef, direct.dual_coef)
        assert model.inner_svm.bias == direct.bias
        assert np.all(model.kernel_weights == 1.0)

    def test_single_kernel_is_plain_svm(self, rng):
        x, labels = labeled_blobs(rng, n_per=10)
        y = np.where(labels == 1, 1.0, -1.0)
        k = rbf_kernel_of(x)
        model = train_linf_mkl([k], y, tol=1e-4)
        direct = solve_binary_svm(k, y, tol=1e-4)
        assert np.array_equal(model.inner_svm.dual_coef, direct.dual_coef)

    def test_faster_than_lp_path(self, rng):
        x, labels = labeled_blobs(rng, n_per=40, classes=2, sep=1.5)
        y = np.where(labels == 1, 1.0, -1.0)
        kernels = [rbf_kernel_of(x, s) for s in 2.0 ** np.arange(-2, 8)]
        t0 = time.perf_counter()
        train_linf_mkl(kernels, y, tol=1e-4)
        t_inf = time.perf_counter() - t0
        t0 = time.perf_counter()
        train_lp_mkl(kernels, y, p=1.01, tol=1e-4)
        t_lp = time.perf_counter() - t0
        assert t_inf < t_lp

    def test_duplicate_kernel_weight_split_invariance(self, rng):
        x, labels = labeled_blobs(rng, n_per=12)
        y = np.where(labels == 1, 1.0, -1.0)
        k = rbf_kernel_of(x)
        a = solve_binary_svm(k + k, y, tol=1e-8)
        b = solve_binary_svm(2.0 * k, y, tol=1e-8)
        fa = decision_values(a, k + k)
        fb = decision_values(b, 2.0 * k)
        np.testing.assert_allclose(fa, fb, atol=1e-9)


class TestOvr:
    def test_two_class_matches_binary_sign(self, rng):
        x, labels = labeled_blobs(rng, n_per=15, classes=2)
        k = rbf_kernel_of(x)
        ensemble = train_ovr(k, labels, trainer="svm")
        pred = predict(ensemble, k)
        binary = solve_binary_svm(k, np.where(labels == 1, 1.0, -1.0))
        f = decision_values(binary, k)
        expected = np.where(f > 0, 1, 2)
        ties = f == 0
        np.testing.assert_array_equal(pred[~ties], expected[~ties])

    def test_three_class_blobs_perfect(self, rng):
        x, labels = labeled_blobs(rng, n_per=15, classes=3, sep=6.0)
        k = x @ x.T  # linear-equivalent gram
        ensemble = train_ovr(k, labels, trainer="svm", c_reg=10.0)
        pred = predict(ensemble, k)
        assert np.all(pred == labels)

    def test_single_sample_class_trains(self, rng):
        x = rng.normal(size=(11, 2))
        labels = np.array([1] * 10 + [2])
        k = rbf_kernel_of(x)
        ensemble = train_ovr(k, labels, trainer="svm")
        pred = predict(ensemble, k)
        assert pred.shape == (11,)

    def test_mkl_trainers(self, rng):
        x, labels = labeled_blobs(rng, n_per=10, classes=3, sep=4.0)
        kernels = [rbf_kernel_of(x, s) for s in (1.0, 4.0)]
        for trainer, p in (("lp_mkl", 2.0), ("linf_mkl", None)):
            ensemble = train_ovr(kernels, labels, trainer=trainer, p=p)
            assert len(ensemble.models) == 3
            pred = predict(ensemble, kernels)
            assert pred.shape == labels.shape


class TestPredict:
    def test_all_equal_scores_tie_to_class_one(self):
        class Flat:
            converged = True

            def __init__(self):
                self.dual_coef = np.zeros(3)
                self.bias = 0.5

        from bandfuse.mkl import OvrEnsemble

        models = [Flat(), Flat(), Flat()]
        ensemble = OvrEnsemble(models=models, n_classes=3)
        pred = predict(ensemble, np.zeros((3, 5)))
        assert np.all(pred == 1)

    def test_matches_per_class_loop(self, rng):
        x, labels = labeled_blobs(rng, n_per=10, classes=3, sep=3.0)
        k = rbf_kernel_of(x)
        ensemble = train_ovr(k, labels, trainer="svm")
        scores = ovr_decision_matrix(ensemble, k)
        manual = np.stack(
            [decision_values(m, k) for m in ensemble.models], axis=1
        )
        np.testing.assert_array_equal(scores, manual)
        np.testing.assert_array_equal(predict(ensemble, k), np.argmax(manual, axis=1) + 1)
