import logging
import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np
from joblib import Parallel, delayed

from .config import settings
from .dataset import ACTIVE, BANKRUPT, Dataset
from .errors import ConfigError, DataError


logger = logging.getLogger("BankRisk.forest")

# Weighted Gini values closer than this are treated as tied.
GINI_TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Leaf:
    counts: tuple[int, int]

    @property
    def majority(self) -> int:
        # equal counts resolve to bankrupt
        return BANKRUPT if self.counts[BANKRUPT] >= self.counts[ACTIVE] else ACTIVE


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    weighted_gini: float


@dataclass(frozen=True)
class Forest:
    schema_codes: tuple[str, ...]
    trees: tuple[TreeNode, ...]
    max_features: int
    seed: int
    bootstrap: bool = True
    min_samples_split: int = settings.forest.min_samples_split
    oob_accuracy: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_codes": list(self.schema_codes),
            "B": self.n_trees,
            "p": self.max_features,
            "seed": self.seed,
            "bootstrap": self.bootstrap,
            "min_samples_split": self.min_samples_split,
            "oob_accuracy": self.oob_accuracy,
            "trees": [node_to_dict(tree) for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "Forest":
        return cls(
            schema_codes=tuple(payload["schema_codes"]),
            trees=tuple(node_from_dict(tree) for tree in payload["trees"]),
            max_features=int(payload["p"]),
            seed=int(payload["seed"]),
            bootstrap=bool(payload.get("bootstrap", True)),
            min_samples_split=int(payload.get("min_samples_split", settings.forest.min_samples_split)),
            oob_accuracy=payload.get("oob_accuracy"),
        )


def node_to_dict(node: TreeNode) -> dict[str, Any]:
    if isinstance(node, Leaf):
        return {"counts": list(node.counts)}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(payload: dict[str, Any]) -> TreeNode:
    if "counts" in payload:
        active, bankrupt = payload["counts"]
        return Leaf((int(active), int(bankrupt)))
    return Split(
        feature=int(payload["feature"]),
        threshold=float(payload["threshold"]),
        left=node_from_dict(payload["left"]),
        right=node_from_dict(payload["right"]),
    )


def gini(class_counts: tuple[int, ...] | list[int]) -> float:
    total = sum(class_counts)
    if total < 1:
        raise ConfigError("Gini impurity needs at least one counted record")
    return 1.0 - sum((count / total) ** 2 for count in class_counts)


def _class_counts(labels: np.ndarray) -> tuple[int, int]:
    bankrupt = int(np.sum(labels == BANKRUPT))
    return (len(labels) - bankrupt, bankrupt)


def best_split(features: np.ndarray, labels: np.ndarray, candidate_features: list[int]) -> SplitCandidate | None:
    """Midpoint threshold minimising child-size-weighted Gini over the candidate features."""
    n = labels.shape[0]
    if n == 0 or not candidate_features:
        raise ConfigError("best_split needs at least one row and one candidate feature")
    if len(np.unique(labels)) < 2:
        return None

    best: SplitCandidate | None = None
    for feature in sorted(candidate_features):
        column = features[:, feature]
        order = np.argsort(column, kind="stable")
        values = column[order]
        bankrupt_left = np.cumsum(labels[order] == BANKRUPT)
        bankrupt_total = bankrupt_left[-1]

        for position in np.flatnonzero(values[:-1] < values[1:]):
            left_size = position + 1
            right_size = n - left_size
            left_bankrupt = int(bankrupt_left[position])
            right_bankrupt = int(bankrupt_total) - left_bankrupt
            weighted = (
                left_size * gini((left_size - left_bankrupt, left_bankrupt))
                + right_size * gini((right_size - right_bankrupt, right_bankrupt))
            ) / n
            if best is None or weighted < best.weighted_gini - GINI_TIE_TOLERANCE:
                low, high = float(values[position]), float(values[position + 1])
                threshold = (low + high) / 2.0
                if threshold >= high:
                    threshold = low
                best = SplitCandidate(int(feature), threshold, float(weighted))
    return best


def build_tree(
    features: np.ndarray,
    labels: np.ndarray,
    max_features: int,
    rng: np.random.Generator,
    min_samples_split: int = settings.forest.min_samples_split,
) -> TreeNode:
    counts = _class_counts(labels)
    if labels.shape[0] < min_samples_split or min(counts) == 0:
        return Leaf(counts)

    candidates = rng.choice(features.shape[1], size=max_features, replace=False)
    candidate = best_split(features, labels, [int(feature) for feature in candidates])
    if candidate is None:
        return Leaf(counts)

    goes_left = features[:, candidate.feature] <= candidate.threshold
    return Split(
        feature=candidate.feature,
        threshold=candidate.threshold,
        left=build_tree(features[goes_left], labels[goes_left], max_features, rng, min_samples_split),
        right=build_tree(features[~goes_left], labels[~goes_left], max_features, rng, min_samples_split),
    )


def leaf_for(tree: TreeNode, x: np.ndarray) -> Leaf:
    node = tree
    while isinstance(node, Split):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node


def tree_predict(tree: TreeNode, x: np.ndarray) -> int:
    return leaf_for(tree, x).majority


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def draw_bootstrap(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n, size=n)


def _grow_tree(
    features: np.ndarray,
    labels: np.ndarray,
    max_features: int,
    seed: int,
    index: int,
    bootstrap: bool,
    min_samples_split: int,
) -> tuple[TreeNode, np.ndarray]:
    rng = tree_rng(seed, index)
    rows = draw_bootstrap(labels.shape[0], rng) if bootstrap else np.arange(labels.shape[0])
    tree = build_tree(features[rows], labels[rows], max_features, rng, min_samples_split)
    return tree, rows


def default_max_features(feature_count: int) -> int:
    return max(1, math.isqrt(feature_count))


def _out_of_bag_accuracy(trees: list[TreeNode], rows_per_tree: list[np.ndarray], dataset: Dataset) -> float | None:
    votes = np.zeros(dataset.n, dtype=int)
    voters = np.zeros(dataset.n, dtype=int)
    for tree, rows in zip(trees, rows_per_tree, strict=True):
        out_of_bag = np.setdiff1d(np.arange(dataset.n), rows)
        for index in out_of_bag:
            voters[index] += 1
            votes[index] += tree_predict(tree, dataset.features[index])
    if np.any(voters == 0):
        return None
    predictions = (2 * votes >= voters).astype(int)
    return float(np.mean(predictions == dataset.labels))


def fit_forest(
    dataset: Dataset,
    n_trees: int = settings.forest.n_trees,
    max_features: int | None = None,
    seed: int = settings.default_seed,
    bootstrap: bool = True,
    min_samples_split: int = settings.forest.min_samples_split,
    n_jobs: int = 1,
) -> Forest:
    if n_trees < 1:
        raise ConfigError(f"A forest needs at least one tree, got B={n_trees}")
    if dataset.n == 0:
        raise DataError("Cannot grow a forest on an empty dataset")
    p = max_features if max_features is not None else default_max_features(dataset.m)
    if not 1 <= p <= dataset.m:
        raise ConfigError(f"max_features must lie in [1, {dataset.m}], got {p}")

    grown = Parallel(n_jobs=n_jobs)(
        delayed(_grow_tree)(
            dataset.features,
            dataset.labels,
            p,
            seed,
            index,
            bootstrap,
            min_samples_split,
        )
        for index in range(n_trees)
    )
    trees = [tree for tree, _ in grown]
    oob_accuracy = _out_of_bag_accuracy(trees, [rows for _, rows in grown], dataset) if bootstrap else None

    forest = Forest(
        schema_codes=dataset.schema.codes,
        trees=tuple(trees),
        max_features=p,
        seed=seed,
        bootstrap=bootstrap,
        min_samples_split=min_samples_split,
        oob_accuracy=oob_accuracy,
    )
    logger.info("model_fit kind=forest B=%s p=%s seed=%s oob_accuracy=%s", n_trees, p, seed, oob_accuracy)
    return forest


def _check_width(forest: Forest, features: np.ndarray) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(features, dtype=float))
    if matrix.shape[1] != len(forest.schema_codes):
        raise ConfigError(f"Expected {len(forest.schema_codes)} features, got {matrix.shape[1]}")
    return matrix


def forest_votes(forest: Forest, features: np.ndarray) -> np.ndarray:
    matrix = _check_width(forest, features)
    return np.array([sum(tree_predict(tree, row) for tree in forest.trees) for row in matrix], dtype=int)


def forest_proba_many(forest: Forest, features: np.ndarray) -> np.ndarray:
    return forest_votes(forest, features) / forest.n_trees


def forest_proba(forest: Forest, x: np.ndarray) -> float:
    return float(forest_proba_many(forest, np.asarray(x, dtype=float).reshape(1, -1))[0])


def forest_predict(forest: Forest, features: np.ndarray) -> np.ndarray:
    # a vote of exactly B/2 resolves to bankrupt
    return (2 * forest_votes(forest, features) >= forest.n_trees).astype(int)
