import numpy as np
import pytest

from foodid.errors import ArchMismatch, DimensionMismatch
from foodid.learners import (
    load_model,
    loss_and_grads,
    mlp_predict,
    mlp_predict_proba,
    mlp_train,
    save_model,
)

AND_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
AND_Y = np.array([0, 0, 0, 1])


def max_grad_rel_error(model, X, y, eps=1e-5):
    """Central finite differences against the analytic gradients."""
    _, gw, gb = loss_and_grads(model, X, y)
    worst = 0.0
    for arr, grad in zip(model.weights + model.biases, gw + gb):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp, _, _ = loss_and_grads(model, X, y)
            flat[idx] = orig - eps
            lm, _, _ = loss_and_grads(model, X, y)
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * eps)
            rel = abs(numeric - gflat[idx]) / max(abs(numeric) + abs(gflat[idx]), 1e-6)
            worst = max(worst, rel)
    return worst


class TestGradients:
    @pytest.mark.parametrize("seed", range(4))
    def test_finite_difference_check_softmax(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        d, h1, h2, k = 5, 7, 6, 3
        X = rng.standard_normal((6, d))
        y = rng.integers(0, k, size=6)
        model = mlp_train(X, y, arch=(d, h1, h2, k), dropout=(0, 0), epochs=1,
                          batch=6, lr=0.05, seed=seed)
        assert max_grad_rel_error(model, X, y) < 1e-4

    def test_finite_difference_check_regression_preset(self):
        rng = np.random.Generator(np.random.PCG64(11))
        X = rng.standard_normal((5, 4))
        y = rng.integers(0, 3, size=5)
        model = mlp_train(X, y, arch=(4, 6, 5, 1), dropout=(0, 0), epochs=1,
                          batch=5, lr=0.05, seed=2, output_mode="relu_regression")
        assert max_grad_rel_error(model, X, y) < 1e-4


class TestTraining:
    def test_deterministic_without_dropout(self):
        rng = np.random.Generator(np.random.PCG64(5))
        X = rng.standard_normal((20, 3))
        y = (X[:, 0] > 0).astype(int)
        m1 = mlp_train(X, y, arch=(3, 8, 8, 2), dropout=(0, 0), epochs=5, batch=4,
                       lr=0.1, seed=7)
        m2 = mlp_train(X, y, arch=(3, 8, 8, 2), dropout=(0, 0), epochs=5, batch=4,
                       lr=0.1, seed=7)
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)
        for b1, b2 in zip(m1.biases, m2.biases):
            assert np.array_equal(b1, b2)

    def test_deterministic_with_dropout(self):
        rng = np.random.Generator(np.random.PCG64(6))
        X = rng.standard_normal((20, 3))
        y = (X[:, 0] > 0).astype(int)
        m1 = mlp_train(X, y, arch=(3, 8, 8, 2), dropout=(0.3, 0.3), epochs=3,
                       batch=4, lr=0.1, seed=9)
        m2 = mlp_train(X, y, arch=(3, 8, 8, 2), dropout=(0.3, 0.3), epochs=3,
                       batch=4, lr=0.1, seed=9)
        assert all(np.array_equal(a, b) for a, b in zip(m1.weights, m2.weights))

    def test_learns_and_function(self):
        model = mlp_train(AND_X, AND_Y, arch=(2, 8, 8, 2), dropout=(0, 0),
                          epochs=2000, batch=4, lr=0.5, seed=0)
        assert np.array_equal(mlp_predict(model, AND_X), AND_Y)

    def test_regression_preset_learns_graded_bands(self):
        rng = np.random.Generator(np.random.PCG64(0))
        X = np.concatenate(
            [rng.uniform(i, i + 0.8, size=(12, 2)) + np.array([i * 2.0, 0]) for i in range(4)]
        )
        y = np.repeat([0, 1, 2, 3], 12)
        model = mlp_train(X, y, arch=(2, 16, 8, 1), dropout=(0, 0), epochs=1500,
                          batch=8, lr=0.05, seed=1, output_mode="relu_regression")
        assert (mlp_predict(model, X) == y).mean() == 1.0

    def test_arch_validation(self):
        with pytest.raises(ArchMismatch):
            mlp_train(AND_X, AND_Y, arch=(3, 8, 8, 2))  # wrong input width
        with pytest.raises(ArchMismatch):
            mlp_train(AND_X, AND_Y, arch=(2, 8, 2))  # not 3 dense layers
        with pytest.raises(ArchMismatch):
            mlp_train(AND_X, AND_Y, arch=(2, 8, 8, 5), n_classes=2)  # head/K conflict
        with pytest.raises(ArchMismatch):
            mlp_train(AND_X, AND_Y, dropout=(0.5, 1.0))


class TestPredict:
    def make_model(self):
        rng = np.random.Generator(np.random.PCG64(8))
        X = rng.standard_normal((30, 4))
        y = rng.integers(0, 3, size=30)
        model = mlp_train(X, y, arch=(4, 10, 8, 3), dropout=(0.2, 0.2), epochs=3,
                          batch=8, lr=0.05, seed=3)
        return model, X

    def test_probabilities_sum_to_one(self):
        model, X = self.make_model()
        probs = mlp_predict_proba(model, X)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_empty_input(self):
        model, _ = self.make_model()
        assert mlp_predict(model, np.zeros((0, 4))).shape == (0,)

    def test_dimension_mismatch(self):
        model, _ = self.make_model()
        with pytest.raises(DimensionMismatch):
            mlp_predict(model, np.zeros((2, 9)))

    def test_regression_predictions_clamped(self):
        rng = np.random.Generator(np.random.PCG64(10))
        X = rng.standard_normal((12, 3))
        y = rng.integers(0, 4, size=12)
        model = mlp_train(X, y, arch=(3, 6, 6, 1), dropout=(0, 0), epochs=2,
                          batch=4, lr=0.05, seed=4, output_mode="relu_regression",
                          n_classes=4)
        preds = mlp_predict(model, X * 100)  # force extreme outputs
        assert preds.min() >= 0 and preds.max() <= 3

    def test_row_permutation(self, rng):
        model, X = self.make_model()
        perm = rng.permutation(len(X))
        assert np.array_equal(mlp_predict(model, X)[perm], mlp_predict(model, X[perm]))


class TestMlpStore:
    def test_roundtrip(self, tmp_path):
        model, X = TestPredict().make_model()
        path = str(tmp_path / "mlp.fmd")
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(mlp_predict(model, X), mlp_predict(back, X))
        assert np.allclose(back.predict_scores(X), model.predict_scores(X))
        assert back.layer_sizes == model.layer_sizes
        assert back.output_mode == model.output_mode
