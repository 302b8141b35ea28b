import calendar
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .config import settings
from .dataset import BANK_ID_COLUMN, PERIOD_COLUMN, FeatureSchema, Quarter, parse_feature_cell, read_raw_csv
from .errors import ConfigError, DataError
from .models import Classifier
from .observability import record_early_warning


logger = logging.getLogger("BankRisk.trend")

Report = tuple[Quarter, np.ndarray]


@dataclass(frozen=True)
class TrendPoint:
    period: Quarter
    # None marks a gap: the quarterly report had missing values
    probabilities: Mapping[str, float | None]


@dataclass(frozen=True)
class TrendSeries:
    bank_id: str
    model_names: tuple[str, ...]
    points: tuple[TrendPoint, ...]
    threshold: float = settings.trend.threshold
    warnings: Mapping[str, Quarter | None] = field(default_factory=dict)

    def __post_init__(self) -> None:
        periods = [point.period for point in self.points]
        if any(earlier >= later for earlier, later in zip(periods, periods[1:])):
            raise DataError(f"Trend points for {self.bank_id!r} must be strictly increasing in period")


def probability_series(
    models: Mapping[str, Classifier],
    reports: Sequence[Report],
    bank_id: str = "",
    threshold: float = settings.trend.threshold,
) -> TrendSeries:
    if not reports:
        raise DataError(f"No quarterly reports supplied for bank {bank_id!r}")
    if not models:
        raise ConfigError("Trend analysis needs at least one fitted model")
    codes = {tuple(classifier.schema_codes) for classifier in models.values()}
    if len(codes) != 1:
        raise DataError("Trend models were trained on different schemas")
    width = len(next(iter(codes)))

    ordered = sorted(reports, key=lambda report: report[0])
    points: list[TrendPoint] = []
    for period, values in ordered:
        vector = np.asarray(values, dtype=float).reshape(-1)
        if vector.shape[0] != width:
            raise DataError(f"Report {period} for {bank_id!r} has {vector.shape[0]} values; models expect {width}")
        if not np.all(np.isfinite(vector)):
            logger.info("trend gap bank_id=%s period=%s", bank_id, period)
            points.append(TrendPoint(period, {name: None for name in models}))
            continue
        points.append(
            TrendPoint(
                period,
                {name: float(classifier.predict_proba(vector[np.newaxis, :])[0]) for name, classifier in models.items()},
            )
        )

    series = TrendSeries(bank_id=bank_id, model_names=tuple(models), points=tuple(points), threshold=threshold)
    warnings = {name: first_warning(series, name) for name in models}
    for name, period in warnings.items():
        if period is not None:
            record_early_warning(name)
            logger.info("early_warning bank_id=%s model=%s period=%s", bank_id, name, period)
    return TrendSeries(
        bank_id=bank_id,
        model_names=series.model_names,
        points=series.points,
        threshold=threshold,
        warnings=warnings,
    )


def first_warning(series: TrendSeries, model: str) -> Quarter | None:
    if model not in series.model_names:
        raise ConfigError(f"Model {model!r} is not part of the trend series; available: {list(series.model_names)}")
    for point in series.points:
        probability = point.probabilities.get(model)
        # strictly greater: a probability of exactly the threshold is no warning
        if probability is not None and probability > series.threshold:
            return point.period
    return None


def _whole_months(start: date, end: date) -> int:
    months = (end.year - start.year) * 12 + (end.month - start.month)
    end_of_month = end.day == calendar.monthrange(end.year, end.month)[1]
    if end.day < start.day and not end_of_month:
        months -= 1
    return months


def lead_time(series: TrendSeries, model: str, event_date: date) -> int | None:
    warning = first_warning(series, model)
    if warning is None:
        return None
    anchor = warning.end_date()
    if event_date >= anchor:
        return _whole_months(anchor, event_date)
    return -_whole_months(event_date, anchor)


def read_reports(path: str | Path, schema: FeatureSchema) -> dict[str, list[Report]]:
    frame = read_raw_csv(path, [BANK_ID_COLUMN, PERIOD_COLUMN, *schema.codes])
    reports: dict[str, list[Report]] = {}
    for position, row in enumerate(frame.to_dict(orient="records")):
        line = position + 2
        try:
            period = Quarter.parse(row[PERIOD_COLUMN])
        except ConfigError as exc:
            raise DataError(f"Row {line}, column {PERIOD_COLUMN!r}: {exc}") from exc
        values = np.array([parse_feature_cell(row[code], line, code) for code in schema.codes])
        bank_reports = reports.setdefault(row[BANK_ID_COLUMN].strip(), [])
        if any(existing == period for existing, _ in bank_reports):
            raise DataError(f"Row {line}: duplicate period {period} for bank {row[BANK_ID_COLUMN]!r}")
        bank_reports.append((period, values))
    return reports


def series_frame(all_series: Sequence[TrendSeries]) -> pd.DataFrame:
    records = []
    for series in all_series:
        for point in series.points:
            record: dict[str, Any] = {BANK_ID_COLUMN: series.bank_id, PERIOD_COLUMN: str(point.period)}
            record.update(point.probabilities)
            records.append(record)
    return pd.DataFrame.from_records(records)


def warning_summary(
    all_series: Sequence[TrendSeries],
    events: Mapping[str, date] | None = None,
) -> dict[str, Any]:
    events = events or {}
    summary: dict[str, Any] = {}
    for series in all_series:
        event_date = events.get(series.bank_id)
        summary[series.bank_id] = {
            "threshold": series.threshold,
            "warnings": {
                name: str(period) if period is not None else None for name, period in series.warnings.items()
            },
            "event_date": event_date.isoformat() if event_date else None,
            "lead_times_months": {
                name: lead_time(series, name, event_date) if event_date else None for name in series.model_names
            },
        }
    return summary
