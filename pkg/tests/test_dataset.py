import json
import logging
import math
from datetime import date

import numpy as np
import pytest

from bankrisk_app.dataset import (
    COMMERCIAL_SCHEMA,
    RURAL_SCHEMA,
    FeatureSchema,
    Quarter,
    Standardization,
    clean,
    ingest_csv,
    load_schema,
    split,
    train_size,
    write_csv,
)
from bankrisk_app.errors import (
    ConfigError,
    DataError,
    InvalidLabelError,
    InvalidValueError,
    MissingColumnError,
    MissingFileError,
)

from conftest import gaussian_dataset, make_dataset


def write_rows(path, header, rows):
    path.write_text("\n".join([",".join(header), *[",".join(row) for row in rows]]) + "\n", encoding="utf-8")
    return path


def test_builtin_schemas_match_the_camels_tables():
    assert len(COMMERCIAL_SCHEMA) == 20
    assert COMMERCIAL_SCHEMA.codes[0] == "CA1"
    assert COMMERCIAL_SCHEMA.codes[-1] == "SMR4"
    assert RURAL_SCHEMA.codes == ("CAR", "AssetQuality", "NPM", "ROA", "LDR")


def test_load_schema_from_file(tmp_path):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps([{"code": "A", "description": "first"}, {"code": "B"}]), encoding="utf-8")
    schema = load_schema(path)
    assert schema.codes == ("A", "B")
    assert schema.features[0].description == "first"


def test_schema_rejects_duplicate_codes():
    with pytest.raises(ConfigError):
        FeatureSchema.from_codes(["A", "B", "A"])


def test_unknown_schema_name_is_a_config_error():
    with pytest.raises(ConfigError):
        load_schema("no-such-schema")


@pytest.mark.parametrize(
    ("text", "end"),
    [("2018-Q1", date(2018, 3, 31)), ("2016-Q2", date(2016, 6, 30)), ("2017-Q4", date(2017, 12, 31))],
)
def test_quarter_end_dates(text, end):
    assert Quarter.parse(text).end_date() == end


def test_quarter_shift_and_order():
    start = Quarter.parse("2016-Q3")
    assert str(start.shift(2)) == "2017-Q1"
    assert start.shift(-3) == Quarter(2015, 4)
    assert start < start.shift(1)


def test_invalid_quarter_text():
    with pytest.raises(ConfigError):
        Quarter.parse("2016-Q5")


def test_ingest_parses_labels_and_missing_markers(tmp_path):
    path = write_rows(
        tmp_path / "banks.csv",
        ["bank_id", "a", "b", "label"],
        [["b1", "1.5", "2", "bankrupt"], ["b2", "NA", "3", "active"], ["b3", "0.25", "", "1"]],
    )
    dataset = ingest_csv(path, FeatureSchema.from_codes(["a", "b"]))
    assert dataset.n == 3
    assert list(dataset.labels) == [1, 0, 1]
    assert math.isnan(dataset.features[1, 0])
    assert math.isnan(dataset.features[2, 1])
    assert [record.bank_id for record in dataset.records] == ["b1", "b2", "b3"]


def test_ingest_without_bank_ids_numbers_the_rows(tmp_path):
    path = write_rows(tmp_path / "banks.csv", ["a", "label"], [["1", "0"], ["2", "1"]])
    dataset = ingest_csv(path, FeatureSchema.from_codes(["a"]))
    assert [record.bank_id for record in dataset.records] == ["row-1", "row-2"]


def test_ingest_reports_the_offending_row_and_column(tmp_path):
    path = write_rows(tmp_path / "banks.csv", ["a", "label"], [["1", "0"], ["abc", "1"]])
    with pytest.raises(InvalidValueError) as error:
        ingest_csv(path, FeatureSchema.from_codes(["a"]))
    assert error.value.row == 3
    assert error.value.column == "a"


def test_ingest_rejects_unknown_labels(tmp_path):
    path = write_rows(tmp_path / "banks.csv", ["a", "label"], [["1", "maybe"]])
    with pytest.raises(InvalidLabelError):
        ingest_csv(path, FeatureSchema.from_codes(["a"]))


def test_ingest_missing_column_and_file(tmp_path):
    path = write_rows(tmp_path / "banks.csv", ["a", "label"], [["1", "0"]])
    with pytest.raises(MissingColumnError):
        ingest_csv(path, FeatureSchema.from_codes(["a", "b"]))
    with pytest.raises(MissingFileError):
        ingest_csv(tmp_path / "absent.csv", FeatureSchema.from_codes(["a"]))


def test_written_csv_reads_back_identically(tmp_path):
    dataset = gaussian_dataset(5, 4, 3, seed=1)
    path = tmp_path / "out.csv"
    write_csv(dataset, path)
    again = ingest_csv(path, dataset.schema)
    np.testing.assert_array_equal(again.features, dataset.features)
    np.testing.assert_array_equal(again.labels, dataset.labels)


def test_clean_drops_incomplete_records_and_logs_the_count(caplog):
    dataset = make_dataset([[1.0, 2.0], [np.nan, 1.0], [3.0, np.inf], [4.0, 5.0]], [0, 1, 1, 0])
    with caplog.at_level(logging.INFO, logger="BankRisk.dataset"):
        cleaned = clean(dataset)
    assert cleaned.n == 2
    assert all(record.is_complete for record in cleaned.records)
    assert "removed=2" in caplog.text


def test_clean_warns_when_everything_is_removed(caplog):
    dataset = make_dataset([[np.nan], [np.nan]], [0, 1])
    with caplog.at_level(logging.WARNING, logger="BankRisk.dataset"):
        cleaned = clean(dataset)
    assert cleaned.n == 0
    assert "empty" in caplog.text


@pytest.mark.parametrize(("n", "expected"), [(88, 66), (86, 64), (65, 49), (2, 1)])
def test_train_size_rounding(n, expected):
    assert train_size(n, 0.75) == expected


def test_train_size_rounds_exact_halves_to_even():
    assert train_size(10, 0.25) == 2
    assert train_size(7, 0.5) == 4


def test_stratified_split_of_a_balanced_commercial_set():
    dataset = gaussian_dataset(44, 44, 3, seed=2)
    pair = split(dataset, 0.75, seed=3, stratified=True)
    assert pair.train.class_counts() == {0: 33, 1: 33}
    assert pair.test.class_counts() == {0: 11, 1: 11}


def test_unstratified_split_sizes_and_partition():
    dataset = gaussian_dataset(50, 36, 2, seed=4)
    pair = split(dataset, 0.75, seed=9, stratified=False)
    assert (pair.train.n, pair.test.n) == (64, 22)
    ids = [record.bank_id for record in pair.train.records + pair.test.records]
    assert sorted(ids) == sorted(record.bank_id for record in dataset.records)


def test_split_is_deterministic_for_a_seed():
    dataset = gaussian_dataset(20, 10, 2, seed=4)
    first = split(dataset, 0.75, seed=1, stratified=True)
    second = split(dataset, 0.75, seed=1, stratified=True)
    assert first.train.records == second.train.records


def test_split_rejects_bad_inputs():
    dataset = gaussian_dataset(3, 0, 1, seed=0)
    with pytest.raises(ConfigError):
        split(dataset, 1.0, seed=0, stratified=False)
    with pytest.raises(DataError):
        split(dataset, 0.75, seed=0, stratified=True)


def test_standardization_keeps_constant_columns_finite():
    features = np.array([[1.0, 5.0], [3.0, 5.0]])
    standardization = Standardization.fit(features)
    scaled = standardization.apply(features)
    assert standardization.scale == (1.0, 1.0)
    np.testing.assert_allclose(scaled, [[-1.0, 0.0], [1.0, 0.0]])
