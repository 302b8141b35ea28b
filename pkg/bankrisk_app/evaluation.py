import itertools
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import GridSpec
from .dataset import ACTIVE, BANKRUPT, Dataset
from .errors import BankRiskError, ConfigError, ConvergenceError, DataError
from .models import Classifier, make_factory
from .observability import record_skipped_fold


logger = logging.getLogger("BankRisk.evaluation")

ClassifierFactory = Callable[[Dataset], Classifier]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def to_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn}


@dataclass(frozen=True)
class CrossValidationResult:
    fold_scores: tuple[float | None, ...]
    mean_accuracy: float

    @property
    def evaluated_folds(self) -> int:
        return sum(score is not None for score in self.fold_scores)


@dataclass(frozen=True)
class GridRow:
    params: dict[str, Any]
    fold_scores: tuple[float | None, ...]
    mean_accuracy: float | None
    error: str | None = None


@dataclass(frozen=True)
class GridSearchResult:
    spec: GridSpec
    rows: tuple[GridRow, ...]
    best_index: int

    @property
    def best_params(self) -> dict[str, Any]:
        return self.rows[self.best_index].params

    @property
    def best_score(self) -> float:
        return float(self.rows[self.best_index].mean_accuracy)


def confusion(actual: Sequence[int], predicted: Sequence[int]) -> ConfusionMatrix:
    actual_labels = np.asarray(actual, dtype=int).reshape(-1)
    predicted_labels = np.asarray(predicted, dtype=int).reshape(-1)
    if actual_labels.shape != predicted_labels.shape:
        raise ConfigError(f"Label lists differ in length: {actual_labels.size} vs {predicted_labels.size}")
    if actual_labels.size == 0:
        raise DataError("Confusion matrix needs at least one label")
    binary = {ACTIVE, BANKRUPT}
    if not set(np.unique(actual_labels)) <= binary or not set(np.unique(predicted_labels)) <= binary:
        raise DataError("Confusion matrix labels must be 0 (active) or 1 (bankrupt)")

    actual_bankrupt = actual_labels == BANKRUPT
    predicted_bankrupt = predicted_labels == BANKRUPT
    return ConfusionMatrix(
        tp=int(np.sum(actual_bankrupt & predicted_bankrupt)),
        fn=int(np.sum(actual_bankrupt & ~predicted_bankrupt)),
        fp=int(np.sum(~actual_bankrupt & predicted_bankrupt)),
        tn=int(np.sum(~actual_bankrupt & ~predicted_bankrupt)),
    )


def accuracy(matrix: ConfusionMatrix) -> float:
    if matrix.total == 0:
        raise DataError("Accuracy of an empty confusion matrix is undefined")
    return (matrix.tp + matrix.tn) / matrix.total


def format_percent(value: float) -> str:
    return f"{value * 100:.2f}%"


def evaluate(classifier: Classifier, dataset: Dataset) -> ConfusionMatrix:
    return confusion(dataset.labels, classifier.predict(dataset.features))


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    if k < 2:
        raise ConfigError(f"k-fold needs k >= 2, got {k}")
    if n < k:
        raise DataError(f"Cannot make {k} folds from {n} records")
    permutation = np.random.default_rng(seed).permutation(n)
    return [np.asarray(fold, dtype=int) for fold in np.array_split(permutation, k)]


def cross_validate(
    dataset: Dataset,
    factory: ClassifierFactory,
    k: int,
    seed: int,
) -> CrossValidationResult:
    folds = kfold_indices(dataset.n, k, seed)
    scores: list[float | None] = []
    for number, fold in enumerate(folds, start=1):
        training = np.setdiff1d(np.arange(dataset.n), fold)
        train_part = dataset.subset(training)
        if len(np.unique(train_part.labels)) < 2:
            logger.warning("cv fold=%s skipped; training complement has a single class", number)
            record_skipped_fold()
            scores.append(None)
            continue
        classifier = factory(train_part)
        scores.append(accuracy(evaluate(classifier, dataset.subset(fold))))

    evaluated = [score for score in scores if score is not None]
    if not evaluated:
        raise DataError("Every cross-validation fold was skipped; the dataset has a single class")
    return CrossValidationResult(fold_scores=tuple(scores), mean_accuracy=float(np.mean(evaluated)))


def grid_combinations(spec: GridSpec) -> list[dict[str, Any]]:
    names = list(spec.axes)
    return [dict(zip(names, values, strict=True)) for values in itertools.product(*spec.axes.values())]


def _evaluate_combination(
    dataset: Dataset,
    spec: GridSpec,
    params: dict[str, Any],
    factory_builder: Callable[[dict[str, Any]], ClassifierFactory],
) -> GridRow:
    try:
        result = cross_validate(dataset, factory_builder(params), spec.folds, spec.seed)
    except (BankRiskError, np.linalg.LinAlgError) as exc:
        return GridRow(params=params, fold_scores=(None,) * spec.folds, mean_accuracy=None, error=str(exc))
    return GridRow(params=params, fold_scores=result.fold_scores, mean_accuracy=result.mean_accuracy)


def grid_search(
    dataset: Dataset,
    spec: GridSpec,
    n_jobs: int = 1,
    factory_builder: Callable[[dict[str, Any]], ClassifierFactory] | None = None,
) -> GridSearchResult:
    combinations = grid_combinations(spec)
    builder = factory_builder or (lambda params: make_factory(spec.model, params, spec.seed))
    rows: list[GridRow] = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_combination)(dataset, spec, params, builder) for params in combinations
    )

    for row in rows:
        if row.error is not None:
            logger.warning("grid combination failed model=%s params=%s error=%s", spec.model, row.params, row.error)
    scored = [index for index, row in enumerate(rows) if row.mean_accuracy is not None]
    if not scored:
        raise ConvergenceError(f"Every grid combination failed to fit for model {spec.model!r}")

    # earliest combination wins ties
    best_index = max(scored, key=lambda index: (rows[index].mean_accuracy, -index))
    logger.info(
        "grid_search model=%s combinations=%s best=%s mean_accuracy=%.4f",
        spec.model,
        len(rows),
        rows[best_index].params,
        rows[best_index].mean_accuracy,
    )
    return GridSearchResult(spec=spec, rows=tuple(rows), best_index=best_index)


def grid_results_frame(result: GridSearchResult) -> pd.DataFrame:
    records = []
    for row in result.rows:
        record: dict[str, Any] = dict(row.params)
        for number, fold_score in enumerate(row.fold_scores, start=1):
            record[f"fold_{number}"] = fold_score
        record["mean_accuracy"] = row.mean_accuracy
        record["status"] = "ok" if row.error is None else "failed"
        records.append(record)
    return pd.DataFrame.from_records(records)
