import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hatcheck.cart import (
    GridSearchSpec,
    SplitNode,
    fit,
    grid_search,
    impurity,
    load_tree,
)


def separable_cy(n_per_side=20):
    """1-D separable fixture: cy < 0.5 means wearer."""
    X, y = [], []
    for i in range(n_per_side):
        X.append((1.0, 0.5, 0.1 + 0.3 * i / n_per_side, 0.2, 0.1))
        y.append("wearer")
        X.append((1.0, 0.5, 0.6 + 0.3 * i / n_per_side, 0.2, 0.1))
        y.append("nonwearer")
    return X, y


class TestImpurity:
    def test_pure_node_is_zero(self):
        for criterion in ("gini", "entropy"):
            assert impurity((7, 0), criterion) == 0.0
            assert impurity((0, 12), criterion) == 0.0

    def test_even_split_gini(self):
        assert impurity((5, 5), "gini") == 0.5

    def test_even_split_entropy_one_bit(self):
        assert impurity((5, 5), "entropy") == 1.0

    def test_empty_node_rejected(self):
        with pytest.raises(ValueError):
            impurity((0, 0), "gini")

    def test_unknown_criterion(self):
        with pytest.raises(ValueError):
            impurity((1, 1), "misclassification")

    def test_three_class_gini(self):
        assert impurity((1, 1, 2), "gini") == pytest.approx(1 - (0.25**2 + 0.25**2 + 0.5**2))


class TestFit:
    def test_constant_labels_single_leaf(self):
        X = [(0.0,), (1.0,), (2.0,)]
        tree = fit(X, ["wearer"] * 3)
        assert tree.n_nodes == 1 and tree.n_leaves == 1
        assert tree.depth == 0
        assert tree.predict_one((99.0,)) == "wearer"

    def test_separable_data_gives_depth_one_stump(self):
        X, y = separable_cy()
        tree = fit(X, y)
        assert tree.depth == 1
        assert tree.n_internal == 1 and tree.n_leaves == 2
        assert tree.predict(X) == y
        root = tree.nodes[0]
        assert isinstance(root, SplitNode) and root.feature == 2

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            fit([], [])

    def test_max_depth_zero_forces_leaf(self):
        X, y = separable_cy()
        tree = fit(X, y, max_depth=0)
        assert tree.n_nodes == 1

    def test_min_samples_split_respected(self):
        X, y = separable_cy(n_per_side=3)  # 6 samples
        tree = fit(X, y, min_samples_split=7)
        assert tree.n_nodes == 1  # too few samples to attempt any split

    def test_leaf_tie_prefers_nonwearer(self):
        X = [(0.0,), (0.0,)]  # identical features, conflicting labels
        tree = fit(X, ["wearer", "nonwearer"])
        assert tree.n_nodes == 1
        assert tree.predict_one((0.0,)) == "nonwearer"

    def test_deterministic_given_input_order(self):
        X, y = separable_cy()
        assert fit(X, y) == fit(X, y)

    def test_every_split_decreases_impurity(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(80, 4))
        y = ["wearer" if x[0] + x[2] > 1 else "nonwearer" for x in X]
        tree = fit(X, y, criterion="entropy")
        splits = [n for n in tree.nodes if isinstance(n, SplitNode)]
        assert splits
        assert all(n.decrease > 0 for n in splits)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=15, deadline=None)
    def test_consistent_random_data_memorized(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(40, 3))
        y = ["wearer" if rng.uniform() < 0.5 else "nonwearer" for _ in range(40)]
        tree = fit(X, y)  # unlimited depth, min split 2
        assert tree.predict(X) == y

    def test_deeper_limit_never_hurts_training_accuracy(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(size=(60, 3))
        y = ["wearer" if rng.uniform() < 0.5 else "nonwearer" for _ in range(60)]
        accs = []
        for depth in (1, 2, 3, 5, 8, None):
            tree = fit(X, y, max_depth=depth)
            accs.append(np.mean([p == t for p, t in zip(tree.predict(X), y)]))
        assert all(b >= a - 1e-12 for a, b in zip(accs, accs[1:]))


class TestPredict:
    def test_single_leaf(self):
        tree = fit([(0.0,)], ["wearer"])
        assert tree.predict_one((123.0,)) == "wearer"

    def test_boundary_goes_left(self):
        X = [(1.0, 0.5, 0.4, 0.2, 0.1), (1.0, 0.5, 0.6, 0.2, 0.1)]
        tree = fit(X, ["wearer", "nonwearer"])
        root = tree.nodes[0]
        assert isinstance(root, SplitNode)
        at_boundary = (1.0, 0.5, root.threshold, 0.2, 0.1)
        assert tree.predict_one(at_boundary) == "wearer"
        just_right = (1.0, 0.5, math.nextafter(root.threshold, 1.0), 0.2, 0.1)
        assert tree.predict_one(just_right) == "nonwearer"

    def test_dimension_mismatch(self):
        X, y = separable_cy()
        tree = fit(X, y)
        with pytest.raises(ValueError, match="expects 5"):
            tree.predict_one((1.0, 2.0))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        X, y = separable_cy()
        tree = fit(X, y, criterion="entropy", max_depth=7, min_samples_split=4)
        path = tmp_path / "tree.json"
        tree.save(path)
        again = load_tree(path)
        assert again == tree
        assert again.predict(X) == tree.predict(X)

    def test_format_guard(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError, match="not a hatcheck-tree"):
            load_tree(path)

    def test_node_counts_reported(self):
        X, y = separable_cy()
        tree = fit(X, y)
        assert tree.n_nodes == tree.n_internal + tree.n_leaves
        payload = tree.to_dict()
        assert payload["schema_version"] == 1
        assert len(payload["nodes"]) == tree.n_nodes


class TestGridSearch:
    def test_separable_fixture_perfect_cv_at_minimal_depth(self):
        X, y = separable_cy()  # 40 samples, every grid point separates
        result = grid_search(X, y, GridSearchSpec(seed=0))
        best_record = next(r for r in result.table if r.params == result.best)
        assert best_record.mean_accuracy == 1.0
        assert result.best.max_depth == 2  # smallest depth among the tied

    def test_constant_labels_tie_break(self):
        X = [(float(i),) for i in range(10)]
        y = ["wearer"] * 10
        result = grid_search(X, y, GridSearchSpec(seed=1))
        assert all(r.mean_accuracy == 1.0 for r in result.table)
        assert result.best.max_depth == 2
        assert result.best.min_samples_split == max(GridSearchSpec().min_splits)
        assert result.best.criterion == "gini"

    def test_adversarial_random_labels_near_majority_rate(self):
        rng = np.random.default_rng(17)
        X = rng.uniform(size=(120, 4))
        y = ["wearer" if rng.uniform() < 0.5 else "nonwearer" for _ in range(120)]
        majority = max(y.count("wearer"), y.count("nonwearer")) / len(y)
        result = grid_search(X, y, GridSearchSpec(seed=2))
        best_record = next(r for r in result.table if r.params == result.best)
        assert abs(best_record.mean_accuracy - majority) < 0.25

    def test_reproducible(self):
        X, y = separable_cy()
        a = grid_search(X, y, GridSearchSpec(seed=42))
        b = grid_search(X, y, GridSearchSpec(seed=42))
        assert a == b

    def test_fold_assignment_reported(self):
        X, y = separable_cy()
        result = grid_search(X, y, GridSearchSpec(seed=0, folds=5))
        assert len(result.fold_assignment) == len(y)
        sizes = [result.fold_assignment.count(k) for k in range(5)]
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == len(y)

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="at least 5"):
            grid_search([(0.0,)] * 3, ["wearer"] * 3, GridSearchSpec(folds=5))

    def test_csv_export(self):
        X, y = separable_cy(n_per_side=5)
        result = grid_search(X, y, GridSearchSpec(depths=(2, None), min_splits=(2,),
                                                  seed=0))
        lines = result.to_csv().splitlines()
        assert lines[0].startswith("criterion,max_depth,min_samples_split,fold0")
        assert len(lines) == 1 + 2 * 2  # criteria x depths x min_splits
