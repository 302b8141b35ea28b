import json
from itertools import product

import numpy as np
import pytest

from bankrisk_app.errors import ConfigError
from bankrisk_app.forest import (
    Forest,
    Leaf,
    Split,
    best_split,
    build_tree,
    draw_bootstrap,
    fit_forest,
    forest_predict,
    forest_proba_many,
    gini,
    tree_predict,
    tree_rng,
)

from conftest import gaussian_dataset, make_dataset


@pytest.mark.parametrize("counts", [c for c in product(range(6), repeat=2) if sum(c) > 0])
def test_gini_matches_the_closed_form(counts):
    total = sum(counts)
    expected = 1 - (counts[0] / total) ** 2 - (counts[1] / total) ** 2
    assert gini(counts) == pytest.approx(expected, abs=1e-15)


def test_gini_extremes():
    assert gini((4, 0)) == 0.0
    assert gini((3, 3)) == 0.5
    with pytest.raises(ConfigError):
        gini((0, 0))


def brute_force_split(features, labels, candidates):
    """First split in (feature, threshold) order reaching the minimum weighted Gini."""
    n = labels.size
    best = None
    for feature in sorted(candidates):
        values = np.unique(features[:, feature])
        for low, high in zip(values[:-1], values[1:]):
            threshold = (low + high) / 2
            left = labels[features[:, feature] <= threshold]
            right = labels[features[:, feature] > threshold]
            weighted = (
                left.size * gini((int(np.sum(left == 0)), int(np.sum(left == 1))))
                + right.size * gini((int(np.sum(right == 0)), int(np.sum(right == 1))))
            ) / n
            if best is None or weighted < best[2] - 1e-12:
                best = (feature, threshold, weighted)
    return best


def test_best_split_equals_brute_force_enumeration():
    rng = np.random.default_rng(123)
    checked = 0
    for _ in range(400):
        rows = int(rng.integers(2, 9))
        width = int(rng.integers(1, 4))
        features = rng.integers(0, 4, size=(rows, width)).astype(float)
        labels = rng.integers(0, 2, size=rows)
        if len(np.unique(labels)) < 2:
            continue
        candidates = sorted(rng.choice(width, size=int(rng.integers(1, width + 1)), replace=False).tolist())

        found = best_split(features, labels, candidates)
        expected = brute_force_split(features, labels, candidates)
        if expected is None:
            assert found is None
            continue
        assert (found.feature, found.threshold) == (expected[0], expected[1])
        assert found.weighted_gini == pytest.approx(expected[2], abs=1e-12)
        checked += 1
    assert checked > 100


def test_best_split_returns_none_for_pure_nodes():
    assert best_split(np.array([[1.0], [2.0]]), np.array([1, 1]), [0]) is None


def test_leaf_tie_votes_bankrupt():
    assert Leaf((2, 2)).majority == 1
    assert Leaf((3, 2)).majority == 0


def test_split_routes_equal_values_left():
    tree = Split(0, 1.5, Leaf((1, 0)), Leaf((0, 1)))
    assert tree_predict(tree, np.array([1.5])) == 0
    assert tree_predict(tree, np.array([1.6])) == 1


def test_forest_vote_tie_predicts_bankrupt():
    forest = Forest(("x0",), (Leaf((1, 0)), Leaf((0, 1))), max_features=1, seed=0)
    assert forest_predict(forest, np.array([[0.0]]))[0] == 1
    assert forest_proba_many(forest, np.array([[0.0]]))[0] == 0.5


def test_probabilities_are_exact_vote_fractions(overlapping_dataset):
    forest = fit_forest(overlapping_dataset, n_trees=7, seed=3)
    probabilities = forest_proba_many(forest, overlapping_dataset.features)
    votes = probabilities * forest.n_trees
    np.testing.assert_array_equal(votes, np.round(votes))
    assert np.all((probabilities >= 0) & (probabilities <= 1))


def test_single_tree_without_bootstrap_is_plain_cart(overlapping_dataset):
    forest = fit_forest(overlapping_dataset, n_trees=1, max_features=overlapping_dataset.m, seed=5, bootstrap=False)
    cart = build_tree(
        overlapping_dataset.features,
        overlapping_dataset.labels,
        overlapping_dataset.m,
        np.random.default_rng(99),
    )
    assert forest.trees[0] == cart
    for row in overlapping_dataset.features:
        assert forest_predict(forest, row[np.newaxis, :])[0] == tree_predict(cart, row)


def test_fully_grown_cart_memorises_distinct_training_rows(overlapping_dataset):
    tree = build_tree(overlapping_dataset.features, overlapping_dataset.labels, overlapping_dataset.m, tree_rng(0, 0))
    predictions = [tree_predict(tree, row) for row in overlapping_dataset.features]
    assert predictions == list(overlapping_dataset.labels)


def test_fixed_seed_is_byte_exact(overlapping_dataset):
    first = fit_forest(overlapping_dataset, n_trees=15, max_features=2, seed=21)
    second = fit_forest(overlapping_dataset, n_trees=15, max_features=2, seed=21)
    assert json.dumps(first.to_dict()) == json.dumps(second.to_dict())


def test_parallel_training_matches_serial(overlapping_dataset):
    serial = fit_forest(overlapping_dataset, n_trees=6, seed=4, n_jobs=1)
    parallel = fit_forest(overlapping_dataset, n_trees=6, seed=4, n_jobs=2)
    assert serial.to_dict() == parallel.to_dict()


def test_bootstrap_covers_about_sixty_three_percent():
    rng = np.random.default_rng(8)
    n = 200
    coverage = [np.unique(draw_bootstrap(n, rng)).size / n for _ in range(300)]
    assert np.mean(coverage) == pytest.approx(1 - (1 - 1 / n) ** n, abs=0.01)


def test_tree_streams_are_independent_of_tree_count():
    first = tree_rng(7, 3).integers(0, 1000, size=5)
    again = tree_rng(7, 3).integers(0, 1000, size=5)
    other = tree_rng(7, 4).integers(0, 1000, size=5)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)


def test_adding_a_tree_keeps_the_earlier_trees(overlapping_dataset):
    smaller = fit_forest(overlapping_dataset, n_trees=6, max_features=2, seed=3)
    larger = fit_forest(overlapping_dataset, n_trees=7, max_features=2, seed=3)
    assert larger.trees[:6] == smaller.trees


def test_forest_json_round_trip_predicts_identically(overlapping_dataset):
    forest = fit_forest(overlapping_dataset, n_trees=5, seed=2)
    restored = Forest.from_dict(json.loads(json.dumps(forest.to_dict())))
    np.testing.assert_array_equal(
        forest_proba_many(restored, overlapping_dataset.features),
        forest_proba_many(forest, overlapping_dataset.features),
    )


def test_out_of_bag_accuracy_is_reported_with_bootstrap():
    dataset = gaussian_dataset(30, 30, 2, seed=3, shift=3.0)
    forest = fit_forest(dataset, n_trees=40, seed=1)
    assert forest.oob_accuracy is not None
    assert forest.oob_accuracy > 0.8


def test_forest_validates_its_parameters(overlapping_dataset):
    with pytest.raises(ConfigError):
        fit_forest(overlapping_dataset, n_trees=0)
    with pytest.raises(ConfigError):
        fit_forest(overlapping_dataset, max_features=overlapping_dataset.m + 1)
    with pytest.raises(ConfigError):
        forest_proba_many(fit_forest(make_dataset([[0.0], [1.0]], [0, 1]), n_trees=1), np.zeros((1, 2)))
