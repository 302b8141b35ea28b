import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import pandas as pd

from .config import MODEL_KINDS, GridSpec, default_grid_axes, settings
from .dataset import Dataset, SplitPair, clean, split
from .errors import ConfigError, DataError
from .evaluation import ConfusionMatrix, GridSearchResult, accuracy, evaluate, grid_search
from .models import Classifier, fit_classifier
from .observability import timed_stage
from .resample import SmoteConfig, balance


logger = logging.getLogger("BankRisk.pipeline")


@dataclass(frozen=True)
class ComparisonConfig:
    seed: int = settings.default_seed
    train_fraction: float = settings.split.train_fraction
    stratified: bool = True
    smote_k: int = settings.smote.k
    smote_ratio: float = settings.smote.target_ratio
    smote_after_split: bool = False
    folds: int = settings.evaluation.folds
    models: tuple[str, ...] = MODEL_KINDS
    grids: Mapping[str, GridSpec] = field(default_factory=dict)
    n_jobs: int = 1

    def __post_init__(self) -> None:
        unknown = [kind for kind in self.models if kind not in MODEL_KINDS]
        if unknown or not self.models:
            raise ConfigError(f"Comparison models must be drawn from {MODEL_KINDS}, got {list(self.models)}")
        for kind, spec in self.grids.items():
            if spec.model != kind:
                raise ConfigError(f"Grid for {kind!r} declares model {spec.model!r}")

    def grid_for(self, kind: str, feature_count: int) -> GridSpec:
        if kind in self.grids:
            return self.grids[kind]
        return GridSpec(kind, default_grid_axes(kind, feature_count), self.folds, self.seed)


@dataclass(frozen=True)
class PreparedData:
    cleaned: Dataset
    split: SplitPair


@dataclass(frozen=True)
class ModelOutcome:
    kind: str
    grid: GridSearchResult
    classifier: Classifier
    train_matrix: ConfusionMatrix
    test_matrix: ConfusionMatrix

    @property
    def train_accuracy(self) -> float:
        return accuracy(self.train_matrix)

    @property
    def test_accuracy(self) -> float:
        return accuracy(self.test_matrix)


@dataclass(frozen=True)
class ComparisonResult:
    prepared: PreparedData
    outcomes: tuple[ModelOutcome, ...]


def prepare_data(dataset: Dataset, config: ComparisonConfig) -> PreparedData:
    cleaned = clean(dataset)
    if cleaned.n == 0:
        raise DataError("No complete records remain after cleaning")
    smote = SmoteConfig(k=config.smote_k, target_ratio=config.smote_ratio, seed=config.seed)

    if config.smote_after_split:
        pair = split(cleaned, config.train_fraction, config.seed, config.stratified)
        pair = SplitPair(
            train=balance(pair.train, smote),
            test=pair.test,
            seed=pair.seed,
            train_fraction=pair.train_fraction,
            stratified=pair.stratified,
        )
    else:
        pair = split(balance(cleaned, smote), config.train_fraction, config.seed, config.stratified)

    logger.info(
        "prepared train=%s test=%s train_classes=%s smote_after_split=%s",
        pair.train.n,
        pair.test.n,
        pair.train.class_counts(),
        config.smote_after_split,
    )
    return PreparedData(cleaned=cleaned, split=pair)


def run_model(kind: str, pair: SplitPair, config: ComparisonConfig) -> ModelOutcome:
    spec = config.grid_for(kind, pair.train.m)
    with timed_stage(f"grid_search_{kind}"):
        grid = grid_search(pair.train, spec, n_jobs=config.n_jobs)
    with timed_stage(f"refit_{kind}"):
        classifier = fit_classifier(kind, pair.train, grid.best_params, config.seed, config.n_jobs)
    return ModelOutcome(
        kind=kind,
        grid=grid,
        classifier=classifier,
        train_matrix=evaluate(classifier, pair.train),
        test_matrix=evaluate(classifier, pair.test),
    )


def run_comparison(dataset: Dataset, config: ComparisonConfig) -> ComparisonResult:
    prepared = prepare_data(dataset, config)
    outcomes = tuple(run_model(kind, prepared.split, config) for kind in config.models)
    for outcome in outcomes:
        logger.info(
            "compare model=%s train_accuracy=%.4f test_accuracy=%.4f",
            outcome.kind,
            outcome.train_accuracy,
            outcome.test_accuracy,
        )
    return ComparisonResult(prepared=prepared, outcomes=outcomes)


def comparison_frame(result: ComparisonResult) -> pd.DataFrame:
    return pd.DataFrame.from_records(
        [
            {"model": outcome.kind, "train_accuracy": outcome.train_accuracy, "test_accuracy": outcome.test_accuracy}
            for outcome in result.outcomes
        ],
        columns=["model", "train_accuracy", "test_accuracy"],
    )
