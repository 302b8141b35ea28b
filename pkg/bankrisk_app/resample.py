import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .config import settings
from .dataset import ACTIVE, BANKRUPT, BankRecord, Dataset
from .errors import ConfigError, DataError
from .observability import record_synthetic_records


logger = logging.getLogger("BankRisk.resample")


@dataclass(frozen=True)
class SmoteConfig:
    k: int = settings.smote.k
    target_ratio: float = settings.smote.target_ratio
    seed: int = settings.default_seed

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"SMOTE k must be at least 1, got {self.k}")
        if not 0 < self.target_ratio <= 1:
            raise ConfigError(f"SMOTE target_ratio must lie in (0, 1], got {self.target_ratio}")


def minority_label(dataset: Dataset) -> int:
    counts = dataset.class_counts()
    return ACTIVE if counts[ACTIVE] < counts[BANKRUPT] else BANKRUPT


def knn_minority(dataset: Dataset, sample_index: int, k: int) -> list[int]:
    label = minority_label(dataset)
    if not 0 <= sample_index < dataset.n or dataset.labels[sample_index] != label:
        raise ConfigError(f"Record {sample_index} is not a minority-class record")

    minority = np.flatnonzero(dataset.labels == label)
    if k >= len(minority):
        raise DataError(f"k={k} must be smaller than the minority class size {len(minority)}")

    candidates = minority[minority != sample_index]
    sample = dataset.features[sample_index][np.newaxis, :]
    distances = cdist(sample, dataset.features[candidates])[0]
    # ties go to the lower record index
    order = np.lexsort((candidates, distances))
    return [int(index) for index in candidates[order[:k]]]


def synthesize(sample: np.ndarray, neighbour: np.ndarray, gap: float) -> np.ndarray:
    origin = np.asarray(sample, dtype=float)
    target = np.asarray(neighbour, dtype=float)
    if origin.shape != target.shape:
        raise ConfigError(f"Dimension mismatch: {origin.shape} vs {target.shape}")
    if not 0.0 <= gap <= 1.0:
        raise ConfigError(f"gap must lie in [0, 1], got {gap}")

    point = (1.0 - gap) * origin + gap * target
    return np.clip(point, np.minimum(origin, target), np.maximum(origin, target))


def balance(dataset: Dataset, config: SmoteConfig) -> Dataset:
    counts = dataset.class_counts()
    if min(counts.values()) == 0:
        raise DataError("SMOTE needs both classes present; dataset has a single class")
    incomplete = sum(1 for record in dataset.records if not record.is_complete)
    if incomplete:
        raise DataError(f"SMOTE needs complete records; {incomplete} have missing values, run clean first")

    label = minority_label(dataset)
    majority_count = counts[1 - label]
    minority_count = counts[label]
    target = round(config.target_ratio * majority_count)
    deficit = target - minority_count
    if deficit <= 0:
        logger.info("smote skipped minority=%s target=%s", minority_count, target)
        return dataset
    if minority_count <= config.k:
        raise DataError(f"Minority class has {minority_count} records; SMOTE with k={config.k} needs more")

    rng = np.random.default_rng(config.seed)
    minority = np.flatnonzero(dataset.labels == label)
    neighbours = {int(index): knn_minority(dataset, int(index), config.k) for index in minority}

    synthetic: list[BankRecord] = []
    for counter in range(deficit):
        parent = int(minority[counter % minority_count])
        neighbour = neighbours[parent][int(rng.integers(config.k))]
        gap = float(rng.random())
        values = synthesize(dataset.features[parent], dataset.features[neighbour], gap)
        synthetic.append(
            BankRecord(
                bank_id=f"synthetic-{counter + 1:04d}-{dataset.records[parent].bank_id}",
                period=None,
                values=tuple(float(value) for value in values),
                label=label,
            )
        )

    record_synthetic_records(len(synthetic))
    logger.info(
        "smote minority_label=%s before=%s after=%s majority=%s k=%s",
        label,
        minority_count,
        minority_count + len(synthetic),
        majority_count,
        config.k,
    )
    return dataset.with_records(dataset.records + tuple(synthetic))
