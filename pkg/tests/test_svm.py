import numpy as np
import pytest

from foodid.errors import DegenerateLabels, DimensionMismatch
from foodid.learners import (
    KernelSpec,
    SvmModel,
    kernel_eval,
    load_model,
    save_model,
    scale_sigma,
    svm_predict,
    svm_train,
)
from foodid.learners.svm import BinaryMachine, kernel_matrix

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([0, 0, 1, 1])


class TestKernel:
    def test_rbf_at_zero_distance(self):
        x = np.array([1.0, 2.0, 3.0])
        assert kernel_eval(x, x, KernelSpec("rbf", sigma=0.7)) == 1.0

    def test_rbf_at_two_sigma_squared(self):
        sigma = 1.3
        x = np.zeros(2)
        x2 = np.array([np.sqrt(2.0) * sigma, sigma * np.sqrt(2.0) * 0.0])
        # |x - x2|^2 = 2 sigma^2 exactly
        got = kernel_eval(x, x2, KernelSpec("rbf", sigma=sigma))
        assert got == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_linear_dot_product(self):
        got = kernel_eval(np.array([1.0, 2.0]), np.array([3.0, 4.0]), KernelSpec("linear"))
        assert got == 11.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kernel_eval(np.zeros(2), np.zeros(3), KernelSpec("linear"))

    def test_rbf_gram_is_psd(self, rng):
        X = rng.standard_normal((50, 6))
        K = kernel_matrix(X, X, KernelSpec("rbf", sigma=scale_sigma(X)))
        assert np.allclose(K, K.T)
        eigs = np.linalg.eigvalsh(K)
        assert eigs.min() >= -1e-8

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            KernelSpec("rbf", sigma=0.0)


class TestSmoPostconditions:
    @pytest.mark.parametrize("seed", range(5))
    def test_random_binary_problems(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        n = 30
        X = rng.standard_normal((n, 3))
        y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(int)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        C = float(rng.choice([0.5, 1.0, 10.0]))
        model = svm_train(
            X, y, C=C, kernel=KernelSpec("rbf", sigma=scale_sigma(X)),
            tol=1e-3, seed=seed, collect_diagnostics=True,
        )
        for diag in model.diagnostics["per_class"]:
            assert diag["alpha_min"] >= 0.0
            assert diag["alpha_max"] <= C
            assert abs(diag["alpha_y_sum"]) <= 1e-8
            assert diag["max_kkt_violation"] <= 1e-3


class TestTrainPredict:
    def test_xor_with_rbf(self):
        model = svm_train(XOR_X, XOR_Y, C=10.0, kernel=KernelSpec("rbf", sigma=0.5))
        assert np.array_equal(svm_predict(model, XOR_X), XOR_Y)

    def test_two_point_line_margin(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([0, 1])
        model = svm_train(X, y, C=1000.0, kernel=KernelSpec("linear"))
        assert svm_predict(model, np.array([[-0.5]]))[0] == 0
        assert svm_predict(model, np.array([[0.5]]))[0] == 1

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabels):
            svm_train(np.zeros((4, 2)), np.zeros(4, dtype=int))

    def test_empty_predict(self):
        model = svm_train(XOR_X, XOR_Y, C=1.0, kernel=KernelSpec("rbf", sigma=0.5))
        assert svm_predict(model, np.zeros((0, 2))).shape == (0,)

    def test_dimension_mismatch_on_predict(self):
        model = svm_train(XOR_X, XOR_Y, C=1.0, kernel=KernelSpec("rbf", sigma=0.5))
        with pytest.raises(DimensionMismatch):
            svm_predict(model, np.zeros((3, 5)))

    def test_decision_decays_from_single_support_vector(self):
        machine = BinaryMachine(
            support_vectors=np.zeros((1, 2)),
            dual_coef=np.array([1.0]),
            bias=0.0,
        )
        model = SvmModel(
            classes=(0, 1), machines=(machine, machine), C=1.0,
            kernel=KernelSpec("rbf", sigma=1.0), n_features=2,
        )
        radii = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        values = model.decision_matrix(radii)[:, 0]
        assert np.all(np.diff(values) < 0)

    def test_multiclass_three_blobs(self, rng):
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        X = np.vstack([c + rng.standard_normal((20, 2)) for c in centers])
        y = np.repeat([0, 1, 2], 20)
        model = svm_train(X, y, C=10.0)
        assert (svm_predict(model, X) == y).mean() == 1.0

    def test_row_permutation_permutes_predictions(self, rng):
        X = rng.standard_normal((30, 3))
        y = (X[:, 0] > 0).astype(int)
        model = svm_train(X, y, C=1.0)
        probe = rng.standard_normal((12, 3))
        perm = rng.permutation(12)
        assert np.array_equal(svm_predict(model, probe)[perm], svm_predict(model, probe[perm]))

    def test_duplicating_samples_keeps_decisions(self, rng):
        X = rng.standard_normal((20, 2))
        y = (X.sum(axis=1) > 0).astype(int)
        probe = rng.standard_normal((15, 2)) * 1.5
        kernel = KernelSpec("rbf", sigma=scale_sigma(X))
        base = svm_train(X, y, C=5.0, kernel=kernel)
        doubled = svm_train(
            np.vstack([X, X]), np.concatenate([y, y]), C=5.0, kernel=kernel
        )
        assert np.array_equal(svm_predict(base, probe), svm_predict(doubled, probe))

    def test_deterministic_given_seed(self, rng):
        X = rng.standard_normal((40, 4))
        y = (X[:, 0] * X[:, 1] > 0).astype(int)
        a = svm_train(X, y, C=2.0, seed=3)
        b = svm_train(X, y, C=2.0, seed=3)
        probe = rng.standard_normal((25, 4))
        assert np.array_equal(a.decision_matrix(probe), b.decision_matrix(probe))


class TestSvmStore:
    def test_roundtrip(self, tmp_path, rng):
        X = rng.standard_normal((30, 3))
        y = (X[:, 0] > 0).astype(int)
        model = svm_train(X, y, C=2.0)
        path = str(tmp_path / "svm.fmd")
        save_model(model, path)
        back = load_model(path)
        probe = rng.standard_normal((10, 3))
        assert np.array_equal(model.decision_matrix(probe), back.decision_matrix(probe))
        assert back.kernel == model.kernel
        assert back.C == model.C
