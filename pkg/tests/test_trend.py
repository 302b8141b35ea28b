from datetime import date

import numpy as np
import pytest

from bankrisk_app.dataset import FeatureSchema, Quarter
from bankrisk_app.errors import ConfigError, DataError
from bankrisk_app.forest import fit_forest
from bankrisk_app.logreg import LogisticModel
from bankrisk_app.models import ForestClassifier, LogisticClassifier
from bankrisk_app.trend import (
    TrendPoint,
    TrendSeries,
    first_warning,
    lead_time,
    probability_series,
    read_reports,
    series_frame,
    warning_summary,
)

from conftest import gaussian_dataset


def identity_logistic(width: int = 1, beta0: float = 0.0, slope: float = 1.0) -> LogisticClassifier:
    codes = tuple(f"x{index}" for index in range(width))
    return LogisticClassifier(LogisticModel(codes, beta0, (slope,) + (0.0,) * (width - 1), True, 0, 0.0, 0.0))


def quarters(count: int, start: Quarter = Quarter(2018, 1)) -> list[Quarter]:
    return [start.shift(step) for step in range(count)]


def crossing_reports(crossing: int, count: int = 8):
    """Reports whose identity-logistic probability first exceeds 0.5 at index ``crossing``."""
    return [(period, np.array([index - crossing + 0.5])) for index, period in enumerate(quarters(count))]


def manual_series(probabilities, threshold=0.5) -> TrendSeries:
    points = tuple(
        TrendPoint(period, {"m": value}) for period, value in zip(quarters(len(probabilities)), probabilities)
    )
    return TrendSeries(bank_id="b", model_names=("m",), points=points, threshold=threshold)


def test_first_warning_is_the_first_crossing():
    series = manual_series([0.2, 0.4, 0.7, 0.3])
    assert first_warning(series, "m") == Quarter(2018, 3)


def test_probability_equal_to_the_threshold_is_not_a_warning():
    assert first_warning(manual_series([0.1, 0.5, 0.5]), "m") is None


def test_gaps_are_skipped_by_the_warning_scan():
    assert first_warning(manual_series([0.2, None, 0.9]), "m") == Quarter(2018, 3)


def test_unknown_model_name_is_rejected():
    with pytest.raises(ConfigError):
        first_warning(manual_series([0.1]), "other")


def test_points_must_increase_in_period():
    point = TrendPoint(Quarter(2018, 1), {"m": 0.1})
    with pytest.raises(DataError):
        TrendSeries(bank_id="b", model_names=("m",), points=(point, point))


@pytest.mark.parametrize("crossing", [0, 3, 7])
def test_probability_series_finds_the_constructed_crossing(crossing):
    series = probability_series({"logreg": identity_logistic()}, crossing_reports(crossing), bank_id="bank-0001")
    assert series.warnings["logreg"] == quarters(8)[crossing]
    assert len(series.points) == 8


def test_reports_are_sorted_by_period():
    reports = list(reversed(crossing_reports(2)))
    series = probability_series({"logreg": identity_logistic()}, reports)
    assert [point.period for point in series.points] == quarters(8)


def test_zero_model_gives_one_half_and_no_warning():
    model = identity_logistic(slope=0.0)
    series = probability_series({"zero": model}, crossing_reports(4))
    assert all(point.probabilities["zero"] == 0.5 for point in series.points)
    assert series.warnings["zero"] is None


def test_raising_the_threshold_never_moves_the_warning_earlier():
    values = [-2, -1, 0.3, -0.2, 1.0, 1.5, 2.5, 3.0]
    reports = [(period, np.array([value])) for period, value in zip(quarters(8), values)]
    previous = -1
    for threshold in [0.3, 0.5, 0.6, 0.75, 0.9]:
        warning = probability_series({"m": identity_logistic()}, reports, threshold=threshold).warnings["m"]
        position = quarters(8).index(warning) if warning is not None else 8
        assert position >= previous
        previous = position


@pytest.mark.parametrize(
    ("warning_at", "event", "months"),
    [
        (0, date(2018, 8, 29), 4),
        (0, date(2018, 8, 31), 5),
        (0, date(2018, 3, 31), 0),
        (2, date(2018, 6, 15), -3),
    ],
)
def test_lead_time_in_whole_months(warning_at, event, months):
    series = probability_series({"m": identity_logistic()}, crossing_reports(warning_at))
    assert lead_time(series, "m", event) == months


def test_lead_time_without_a_warning_is_none():
    assert lead_time(manual_series([0.1, 0.2]), "m", date(2019, 1, 1)) is None


def test_forest_probabilities_are_multiples_of_one_over_tree_count():
    dataset = gaussian_dataset(20, 20, 2, seed=4)
    forest = ForestClassifier(fit_forest(dataset, n_trees=9, seed=1))
    reports = [(period, dataset.features[index]) for index, period in enumerate(quarters(8))]
    series = probability_series({"forest": forest, "logreg": identity_logistic(width=2)}, reports)
    frame = series_frame([series])
    assert frame.shape == (8, 4)
    votes = frame["forest"].to_numpy() * 9
    np.testing.assert_allclose(votes, np.round(votes), atol=1e-12)


def test_missing_report_values_become_gaps():
    reports = crossing_reports(5)
    reports[2] = (reports[2][0], np.array([np.nan]))
    series = probability_series({"m": identity_logistic()}, reports)
    assert series.points[2].probabilities["m"] is None
    assert series.warnings["m"] == quarters(8)[5]


def test_input_validation():
    with pytest.raises(DataError):
        probability_series({"m": identity_logistic()}, [])
    with pytest.raises(DataError):
        probability_series({"a": identity_logistic(1), "b": identity_logistic(2)}, crossing_reports(1))
    with pytest.raises(DataError):
        probability_series({"m": identity_logistic()}, [(Quarter(2018, 1), np.array([1.0, 2.0]))])


def test_read_reports_groups_rows_by_bank(tmp_path):
    path = tmp_path / "reports.csv"
    path.write_text(
        "bank_id,period,x0\nbank-1,2018-Q2,0.5\nbank-1,2018-Q1,-0.5\nbank-2,2018-Q1,na\n",
        encoding="utf-8",
    )
    reports = read_reports(path, FeatureSchema.from_codes(["x0"]))
    assert sorted(reports) == ["bank-1", "bank-2"]
    assert [period for period, _ in reports["bank-1"]] == [Quarter(2018, 2), Quarter(2018, 1)]
    assert np.isnan(reports["bank-2"][0][1][0])


def test_read_reports_rejects_duplicate_periods(tmp_path):
    path = tmp_path / "reports.csv"
    path.write_text("bank_id,period,x0\nb,2018-Q1,1\nb,2018-Q1,2\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_reports(path, FeatureSchema.from_codes(["x0"]))


def test_warning_summary_reports_lead_times():
    series = probability_series({"m": identity_logistic()}, crossing_reports(0), bank_id="bank-7")
    summary = warning_summary([series], {"bank-7": date(2018, 8, 29)})
    assert summary["bank-7"]["warnings"] == {"m": "2018-Q1"}
    assert summary["bank-7"]["lead_times_months"] == {"m": 4}
    assert summary["bank-7"]["event_date"] == "2018-08-29"
    assert warning_summary([series])["bank-7"]["lead_times_months"] == {"m": None}
