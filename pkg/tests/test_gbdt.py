import numpy as np
import pytest

from foodid.errors import DegenerateLabels, DimensionMismatch
from foodid.learners import gbdt_predict, gbdt_train, load_model, save_model
from oracles import best_split_exhaustive


def separable_dataset(seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal((20, 2))
    y = (X[:, 0] + 0.3 * X[:, 1] > 0).astype(int)
    if len(np.unique(y)) < 2:
        y[0] = 1 - y[0]
    return X, y


def tree_max_depth(tree, node=0):
    if tree.feature[node] < 0:
        return 0
    return 1 + max(
        tree_max_depth(tree, tree.left[node]), tree_max_depth(tree, tree.right[node])
    )


class TestSplitOracle:
    @pytest.mark.parametrize("seed", range(6))
    def test_first_tree_root_matches_exhaustive_search(self, seed):
        X, y = separable_dataset(seed)
        model = gbdt_train(X, y, rounds=1, max_depth=1, reg_lambda=1.0, gamma=0.0)
        # round-0 gradient statistics: uniform softmax over 2 classes
        p = 0.5
        for c in range(2):
            onehot = (y == c).astype(np.float64)
            g = p - onehot
            h = np.full(len(y), p * (1 - p))
            feat, thr, gain = best_split_exhaustive(X, g, h, lam=1.0, gamma=0.0)
            tree = model.rounds[0][c]
            if gain <= 0:
                assert tree.feature[0] < 0
            else:
                assert tree.feature[0] == feat
                assert tree.threshold[0] == pytest.approx(thr, abs=0)


class TestTraining:
    def test_loss_decreases(self):
        X, y = separable_dataset(3)
        model = gbdt_train(X, y, rounds=10)
        assert model.loss_history[10] < model.loss_history[0]
        assert len(model.loss_history) == 11

    def test_constant_features_converge_to_frequencies(self):
        X = np.zeros((10, 3))
        y = np.array([0] * 7 + [1] * 3)
        model = gbdt_train(X, y, rounds=300, learning_rate=0.3, n_classes=2)
        probs = model.predict_proba(np.zeros((1, 3)))[0]
        assert probs[0] == pytest.approx(0.7, abs=0.01)
        assert probs[1] == pytest.approx(0.3, abs=0.01)

    def test_separable_reaches_95_percent(self):
        X, y = separable_dataset(1)
        model = gbdt_train(X, y, rounds=50)
        assert (gbdt_predict(model, X) == y).mean() >= 0.95

    def test_zero_rounds_predicts_class_zero(self):
        X, y = separable_dataset(2)
        model = gbdt_train(X, y, rounds=0)
        assert np.all(gbdt_predict(model, X) == 0)

    def test_depth_bound_respected(self):
        X, y = separable_dataset(4)
        model = gbdt_train(X, y, rounds=3, max_depth=2)
        for round_trees in model.rounds:
            for tree in round_trees:
                assert tree_max_depth(tree) <= 2

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabels):
            gbdt_train(np.zeros((4, 2)), np.zeros(4, dtype=int))

    def test_label_out_of_range_rejected(self):
        with pytest.raises(DegenerateLabels):
            gbdt_train(np.zeros((4, 2)), np.array([0, 1, 2, 3]), n_classes=2)

    def test_multiclass(self, rng):
        centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
        X = np.vstack([c + rng.standard_normal((15, 2)) for c in centers])
        y = np.repeat([0, 1, 2], 15)
        model = gbdt_train(X, y, rounds=30)
        assert (gbdt_predict(model, X) == y).mean() >= 0.95

    def test_deterministic(self):
        X, y = separable_dataset(5)
        a = gbdt_train(X, y, rounds=5)
        b = gbdt_train(X, y, rounds=5)
        assert a.loss_history == b.loss_history
        assert np.array_equal(a.raw_scores(X), b.raw_scores(X))


class TestPredict:
    def test_empty_input(self):
        X, y = separable_dataset(6)
        model = gbdt_train(X, y, rounds=2)
        assert gbdt_predict(model, np.zeros((0, 2))).shape == (0,)

    def test_dimension_mismatch(self):
        X, y = separable_dataset(7)
        model = gbdt_train(X, y, rounds=2)
        with pytest.raises(DimensionMismatch):
            gbdt_predict(model, np.zeros((3, 9)))

    def test_row_permutation(self, rng):
        X, y = separable_dataset(8)
        model = gbdt_train(X, y, rounds=5)
        probe = rng.standard_normal((11, 2))
        perm = rng.permutation(11)
        assert np.array_equal(
            gbdt_predict(model, probe)[perm], gbdt_predict(model, probe[perm])
        )


class TestGbdtStore:
    def test_roundtrip(self, tmp_path):
        X, y = separable_dataset(9)
        model = gbdt_train(X, y, rounds=4)
        path = str(tmp_path / "gbdt.fmd")
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(model.raw_scores(X), back.raw_scores(X))
        assert back.loss_history == pytest.approx(model.loss_history)
        assert back.max_depth == model.max_depth
