import json
import logging
import math
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import date
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from .config import BUILTIN_SCHEMAS
from .errors import (
    ConfigError,
    DataError,
    InvalidLabelError,
    InvalidValueError,
    MissingColumnError,
    MissingFileError,
)
from .observability import record_records_dropped


logger = logging.getLogger("BankRisk.dataset")

BANK_ID_COLUMN = "bank_id"
PERIOD_COLUMN = "period"
MISSING_MARKERS = {"", "na", "nan"}
LABEL_VOCABULARY = {"0": 0, "1": 1, "active": 0, "bankrupt": 1}
ACTIVE = 0
BANKRUPT = 1

_QUARTER_PATTERN = re.compile(r"^(\d{4})-Q([1-4])$")
_QUARTER_END = {1: (3, 31), 2: (6, 30), 3: (9, 30), 4: (12, 31)}


@dataclass(frozen=True, order=True)
class Quarter:
    year: int
    quarter: int

    def __post_init__(self) -> None:
        if not 1 <= self.quarter <= 4:
            raise ConfigError(f"Quarter must be between 1 and 4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        match = _QUARTER_PATTERN.match(text.strip())
        if not match:
            raise ConfigError(f"Invalid period {text!r}; expected YYYY-Qn")
        return cls(int(match.group(1)), int(match.group(2)))

    def end_date(self) -> date:
        month, day = _QUARTER_END[self.quarter]
        return date(self.year, month, day)

    def shift(self, quarters: int) -> "Quarter":
        index = self.year * 4 + (self.quarter - 1) + quarters
        return Quarter(index // 4, index % 4 + 1)

    def __str__(self) -> str:
        return f"{self.year}-Q{self.quarter}"


@dataclass(frozen=True)
class Feature:
    code: str
    description: str = ""


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self) -> None:
        codes = [feature.code for feature in self.features]
        if any(not code or not code.strip() for code in codes):
            raise ConfigError("Feature codes must be non-empty")
        duplicates = sorted({code for code in codes if codes.count(code) > 1})
        if duplicates:
            raise ConfigError(f"Duplicate feature codes in schema: {duplicates}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]]) -> "FeatureSchema":
        return cls(tuple(Feature(code, description) for code, description in pairs))

    @classmethod
    def from_codes(cls, codes: Sequence[str]) -> "FeatureSchema":
        return cls(tuple(Feature(code) for code in codes))

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(feature.code for feature in self.features)

    def __len__(self) -> int:
        return len(self.features)

    def to_json(self) -> str:
        return json.dumps(
            [{"code": feature.code, "description": feature.description} for feature in self.features],
            indent=2,
        )


COMMERCIAL_SCHEMA = FeatureSchema.from_pairs(BUILTIN_SCHEMAS["commercial"])
RURAL_SCHEMA = FeatureSchema.from_pairs(BUILTIN_SCHEMAS["rural"])


def load_schema(name_or_path: str | Path) -> FeatureSchema:
    name = str(name_or_path)
    if name in BUILTIN_SCHEMAS:
        return FeatureSchema.from_pairs(BUILTIN_SCHEMAS[name])

    schema_path = Path(name_or_path)
    if not schema_path.exists():
        raise ConfigError(f"Schema is neither a built-in name {sorted(BUILTIN_SCHEMAS)} nor a file: {name}")
    try:
        payload = json.loads(schema_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Schema file {schema_path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, list) or not payload:
        raise ConfigError(f"Schema file {schema_path} must be a non-empty JSON list")
    try:
        pairs = [(str(item["code"]), str(item.get("description", ""))) for item in payload]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"Schema entries in {schema_path} need a 'code' field") from exc
    return FeatureSchema.from_pairs(pairs)


@dataclass(frozen=True)
class BankRecord:
    bank_id: str
    period: Quarter | None
    values: tuple[float, ...]
    label: int

    @property
    def is_complete(self) -> bool:
        return all(math.isfinite(value) for value in self.values)


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    records: tuple[BankRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        width = len(self.schema)
        for record in self.records:
            if len(record.values) != width:
                raise DataError(
                    f"Record {record.bank_id!r} has {len(record.values)} values; schema expects {width}"
                )
            if record.label not in (ACTIVE, BANKRUPT):
                raise DataError(f"Record {record.bank_id!r} has non-binary label {record.label!r}")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def m(self) -> int:
        return len(self.schema)

    @cached_property
    def features(self) -> np.ndarray:
        matrix = np.array([record.values for record in self.records], dtype=float)
        return matrix.reshape(self.n, self.m)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([record.label for record in self.records], dtype=int)

    def class_counts(self) -> dict[int, int]:
        return {
            ACTIVE: int(np.sum(self.labels == ACTIVE)),
            BANKRUPT: int(np.sum(self.labels == BANKRUPT)),
        }

    def subset(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        return Dataset(self.schema, tuple(self.records[int(index)] for index in indices))

    def with_records(self, records: Sequence[BankRecord]) -> "Dataset":
        return Dataset(self.schema, tuple(records))

    @classmethod
    def from_arrays(
        cls,
        schema: FeatureSchema,
        features: np.ndarray,
        labels: Sequence[int] | np.ndarray,
        bank_ids: Sequence[str] | None = None,
    ) -> "Dataset":
        matrix = np.asarray(features, dtype=float).reshape(len(labels), len(schema))
        ids = list(bank_ids) if bank_ids is not None else [f"bank-{index + 1:04d}" for index in range(len(labels))]
        records = tuple(
            BankRecord(ids[index], None, tuple(float(value) for value in matrix[index]), int(labels[index]))
            for index in range(len(labels))
        )
        return cls(schema, records)


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    train_fraction: float
    stratified: bool


@dataclass(frozen=True)
class Standardization:
    mean: tuple[float, ...]
    scale: tuple[float, ...]

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardization":
        matrix = np.asarray(features, dtype=float)
        mean = matrix.mean(axis=0)
        scale = matrix.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(tuple(float(value) for value in mean), tuple(float(value) for value in scale))

    @classmethod
    def identity(cls, width: int) -> "Standardization":
        return cls((0.0,) * width, (1.0,) * width)

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - np.asarray(self.mean)) / np.asarray(self.scale)

    def to_dict(self) -> list[dict[str, float]]:
        return [{"mean": mean, "stddev": scale} for mean, scale in zip(self.mean, self.scale, strict=True)]

    @classmethod
    def from_dict(cls, payload: list[dict[str, float]]) -> "Standardization":
        return cls(
            tuple(float(item["mean"]) for item in payload),
            tuple(float(item["stddev"]) for item in payload),
        )


def parse_feature_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text.lower() in MISSING_MARKERS:
        return math.nan
    try:
        return float(text)
    except ValueError as exc:
        raise InvalidValueError(row, column, raw) from exc


def parse_label_cell(raw: str, row: int, column: str) -> int:
    label = LABEL_VOCABULARY.get(raw.strip().lower())
    if label is None:
        raise InvalidLabelError(row, column, raw)
    return label


def read_raw_csv(path: str | Path, required_columns: Sequence[str]) -> pd.DataFrame:
    csv_path = Path(path)
    if not csv_path.exists():
        raise MissingFileError(str(csv_path))
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, encoding="utf-8")
    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in required_columns if column not in frame.columns]
    if missing:
        raise MissingColumnError(str(csv_path), missing)
    return frame


def ingest_csv(path: str | Path, schema: FeatureSchema, label_column: str = "label") -> Dataset:
    frame = read_raw_csv(path, [*schema.codes, label_column])
    has_ids = BANK_ID_COLUMN in frame.columns
    has_periods = PERIOD_COLUMN in frame.columns

    records: list[BankRecord] = []
    for position, row in enumerate(frame.to_dict(orient="records")):
        # header is line 1
        line = position + 2
        values = tuple(parse_feature_cell(row[code], line, code) for code in schema.codes)
        label = parse_label_cell(row[label_column], line, label_column)
        bank_id = row[BANK_ID_COLUMN].strip() if has_ids else ""
        period_text = row[PERIOD_COLUMN].strip() if has_periods else ""
        try:
            period = Quarter.parse(period_text) if period_text else None
        except ConfigError as exc:
            raise DataError(f"Row {line}, column {PERIOD_COLUMN!r}: {exc}") from exc
        records.append(BankRecord(bank_id or f"row-{line - 1}", period, values, label))

    dataset = Dataset(schema, tuple(records))
    logger.info("ingest path=%s records=%s features=%s", path, dataset.n, dataset.m)
    return dataset


def to_frame(dataset: Dataset, label_column: str = "label") -> pd.DataFrame:
    frame = pd.DataFrame(dataset.features, columns=list(dataset.schema.codes))
    frame.insert(0, PERIOD_COLUMN, [str(record.period) if record.period else "" for record in dataset.records])
    frame.insert(0, BANK_ID_COLUMN, [record.bank_id for record in dataset.records])
    frame[label_column] = dataset.labels
    return frame


def write_csv(dataset: Dataset, path: str | Path, label_column: str = "label") -> None:
    csv_path = Path(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    to_frame(dataset, label_column).to_csv(csv_path, index=False, na_rep="", lineterminator="\n")


def clean(dataset: Dataset) -> Dataset:
    kept = tuple(record for record in dataset.records if record.is_complete)
    removed = dataset.n - len(kept)
    if removed == 0:
        return dataset

    record_records_dropped(removed)
    logger.info("clean removed=%s kept=%s", removed, len(kept))
    if not kept:
        logger.warning("clean removed every record; dataset is now empty")
    return dataset.with_records(kept)


def train_size(n: int, train_fraction: float) -> int:
    return min(n - 1, max(1, round(train_fraction * n)))


def _stratified_allocation(class_sizes: dict[int, int], total: int, train_fraction: float) -> dict[int, int]:
    exact = {label: train_fraction * size for label, size in class_sizes.items()}
    allocation = {label: math.floor(value) for label, value in exact.items()}
    remainder = total - sum(allocation.values())
    by_remainder = sorted(exact, key=lambda label: (-(exact[label] - allocation[label]), label))
    for label in by_remainder[:max(0, remainder)]:
        allocation[label] += 1
    return allocation


def split(
    dataset: Dataset,
    train_fraction: float,
    seed: int,
    stratified: bool,
) -> SplitPair:
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if dataset.n < 2:
        raise DataError(f"Cannot split a dataset with {dataset.n} records")

    rng = np.random.default_rng(seed)
    permutation = rng.permutation(dataset.n)
    n_train = train_size(dataset.n, train_fraction)

    if stratified:
        counts = dataset.class_counts()
        empty = [label for label, count in counts.items() if count == 0]
        if empty:
            raise DataError(f"Stratified split needs both classes; class {empty[0]} has no records")
        allocation = _stratified_allocation(counts, n_train, train_fraction)
        taken = {label: 0 for label in counts}
        train_indices: list[int] = []
        test_indices: list[int] = []
        for index in permutation:
            label = int(dataset.labels[index])
            if taken[label] < allocation[label]:
                taken[label] += 1
                train_indices.append(int(index))
            else:
                test_indices.append(int(index))
    else:
        train_indices = [int(index) for index in permutation[:n_train]]
        test_indices = [int(index) for index in permutation[n_train:]]

    pair = SplitPair(
        train=dataset.subset(train_indices),
        test=dataset.subset(test_indices),
        seed=seed,
        train_fraction=train_fraction,
        stratified=stratified,
    )
    logger.info(
        "split seed=%s stratified=%s train=%s test=%s",
        seed,
        stratified,
        pair.train.n,
        pair.test.n,
    )
    return pair
