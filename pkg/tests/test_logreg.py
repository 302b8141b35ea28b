import math

import numpy as np
import pytest
from scipy.special import expit

from bankrisk_app.config import settings
from bankrisk_app.dataset import RURAL_SCHEMA, Dataset, FeatureSchema
from bankrisk_app.errors import ConfigError, ConvergenceError
from bankrisk_app.logreg import (
    LogisticModel,
    fit,
    log_likelihood,
    newton_ascent,
    predict_proba,
    predict_proba_many,
    score,
)
from bankrisk_app.synth import generate

from conftest import make_dataset


def test_intercept_only_fit_recovers_log_odds():
    dataset = make_dataset(np.empty((4, 0)), [1, 1, 1, 0], codes=[])
    model = fit(dataset, ridge=0.0)
    assert model.beta == ()
    assert model.beta0 == pytest.approx(math.log(3), abs=1e-6)
    assert model.converged


def test_zero_model_predicts_one_half():
    model = LogisticModel(("a", "b"), 0.0, (0.0, 0.0), True, 0, 0.0, 0.0)
    assert predict_proba(model, np.array([3.0, -7.0])) == 0.5


def test_predict_proba_rejects_wrong_width():
    model = LogisticModel(("a",), 0.0, (1.0,), True, 0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        predict_proba(model, np.array([1.0, 2.0]))


def test_score_matches_finite_differences_of_the_log_likelihood():
    rng = np.random.default_rng(17)
    features = rng.standard_normal((30, 3))
    labels = (rng.random(30) < 0.4).astype(int)
    dataset = make_dataset(features, labels)
    h = 1e-6

    for _ in range(20):
        beta0 = float(rng.normal(0, 0.5))
        beta = rng.normal(0, 0.5, size=3)
        analytic0, analytic = score(beta0, beta, dataset)

        numeric0 = (log_likelihood(beta0 + h, beta, dataset) - log_likelihood(beta0 - h, beta, dataset)) / (2 * h)
        numeric = np.empty(3)
        for index in range(3):
            step = np.zeros(3)
            step[index] = h
            numeric[index] = (
                log_likelihood(beta0, beta + step, dataset) - log_likelihood(beta0, beta - step, dataset)
            ) / (2 * h)

        assert analytic0 == pytest.approx(numeric0, rel=1e-4, abs=1e-6)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_known_coefficients_are_recovered_within_three_standard_errors():
    rng = np.random.default_rng(2024)
    true_beta0 = -0.5
    true_beta = np.array([1.0, -2.0, 0.5])
    features = rng.standard_normal((2000, 3))
    labels = (rng.random(2000) < expit(true_beta0 + features @ true_beta)).astype(int)
    dataset = make_dataset(features, labels)

    model = fit(dataset, ridge=0.0, standardize=False)
    assert model.converged

    estimate = np.array([model.beta0, *model.beta])
    design = np.hstack([np.ones((2000, 1)), features])
    probabilities = expit(design @ estimate)
    information = (design * (probabilities * (1 - probabilities))[:, np.newaxis]).T @ design
    standard_errors = np.sqrt(np.diag(np.linalg.inv(information)))
    truth = np.array([true_beta0, *true_beta])
    assert np.all(np.abs(estimate - truth) <= 3 * standard_errors)


def test_standardized_fit_back_transforms_to_raw_units(overlapping_dataset):
    model = fit(overlapping_dataset, ridge=1e-8)
    intercept, coefficients = model.raw_coefficients()
    raw = expit(intercept + overlapping_dataset.features @ coefficients)
    np.testing.assert_allclose(raw, predict_proba_many(model, overlapping_dataset.features), rtol=1e-10)


def test_unpenalised_fit_on_separable_data_is_not_reported_as_converged(separable_dataset):
    try:
        model = fit(separable_dataset, ridge=0.0)
    except ConvergenceError:
        return
    assert not model.converged


def test_ridge_stabilises_separable_data(separable_dataset):
    model = fit(separable_dataset, ridge=1.0)
    assert model.converged
    predictions = (predict_proba_many(model, separable_dataset.features) >= 0.5).astype(int)
    assert np.mean(predictions == separable_dataset.labels) >= 0.95


def test_single_class_data_gives_an_intercept_only_model(caplog):
    dataset = make_dataset([[1.0], [2.0], [3.0]], [0, 0, 0])
    model = fit(dataset)
    assert model.beta == (0.0,)
    assert predict_proba(model, np.array([2.0])) < 1e-6
    assert "single_class" in caplog.text


def test_model_dictionary_keeps_predictions_exact(overlapping_dataset):
    model = fit(overlapping_dataset)
    restored = LogisticModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(
        predict_proba_many(restored, overlapping_dataset.features),
        predict_proba_many(model, overlapping_dataset.features),
    )


def test_schema_codes_come_from_the_dataset():
    schema = FeatureSchema.from_codes(["CAR", "ROA"])
    features = np.array([[0.1, 1.0], [0.2, 0.0], [0.3, 1.5], [0.05, -0.5]])
    model = fit(Dataset.from_arrays(schema, features, [0, 1, 1, 0]), ridge=0.1)
    assert model.schema_codes == ("CAR", "ROA")


def test_zero_coefficients_give_log_one_half_per_record():
    dataset = make_dataset([[0.3], [-1.2], [2.0], [0.7]], [1, 0, 0, 1])
    assert log_likelihood(0.0, np.zeros(1), dataset) == pytest.approx(4 * math.log(0.5), abs=1e-12)


def test_log_likelihood_matches_the_product_of_bernoulli_terms():
    rng = np.random.default_rng(8)
    features = rng.standard_normal((12, 2))
    labels = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1]
    beta0, beta = 0.3, np.array([0.8, -0.4])

    product = 1.0
    for row, label in zip(features, labels):
        probability = 1.0 / (1.0 + math.exp(-(beta0 + row[0] * beta[0] + row[1] * beta[1])))
        product *= probability if label == 1 else 1.0 - probability
    assert log_likelihood(beta0, beta, make_dataset(features, labels)) == pytest.approx(math.log(product), rel=1e-12)


def test_log_likelihood_stays_finite_at_the_probability_clamp():
    dataset = make_dataset([[-1.0], [1.0]], [0, 1])
    assert log_likelihood(0.0, np.array([1000.0]), dataset) == pytest.approx(0.0, abs=1e-12)
    wrong = log_likelihood(0.0, np.array([-1000.0]), dataset)
    assert math.isfinite(wrong)
    assert wrong == pytest.approx(2 * math.log(settings.logistic.probability_clip), rel=1e-2)


def test_standardized_fit_reaches_the_gradient_tolerance_quickly():
    dataset = generate("gaussian-sep2", 44, 21, RURAL_SCHEMA, seed=7)
    model = fit(dataset, ridge=0.01)
    assert model.converged
    assert model.iterations < 50
    assert model.final_grad_norm <= 1e-8


def test_newton_objective_never_decreases(overlapping_dataset):
    design = np.hstack([np.ones((overlapping_dataset.n, 1)), overlapping_dataset.features])
    penalty = np.full(design.shape[1], 0.01)
    penalty[0] = 0.0
    result = newton_ascent(design, overlapping_dataset.labels.astype(float), penalty, 100, 1e-8)
    trace = np.array(result.objective_trace)
    slack = settings.logistic.objective_rtol * (1.0 + np.abs(trace[:-1]))
    assert result.converged
    assert np.all(np.diff(trace) >= -slack)
    assert trace[-1] > trace[0]


def test_unpenalised_fit_is_calibrated_to_the_positive_rate(overlapping_dataset):
    model = fit(overlapping_dataset, ridge=0.0)
    assert model.converged
    mean_probability = float(np.mean(predict_proba_many(model, overlapping_dataset.features)))
    assert mean_probability == pytest.approx(float(overlapping_dataset.labels.mean()), abs=1e-8)


def test_predictions_do_not_depend_on_affine_feature_changes(overlapping_dataset):
    scale = np.array([100.0, 0.01, -3.0, 7.5])
    shift = np.array([-50.0, 2.0, 0.5, 1000.0])
    moved = make_dataset(overlapping_dataset.features * scale + shift, overlapping_dataset.labels)

    original = predict_proba_many(fit(overlapping_dataset, ridge=0.01), overlapping_dataset.features)
    transformed = predict_proba_many(fit(moved, ridge=0.01), moved.features)
    np.testing.assert_allclose(transformed, original, atol=1e-6)
    np.testing.assert_array_equal(transformed >= 0.5, original >= 0.5)


def test_two_separable_points_need_a_ridge():
    dataset = make_dataset([[-1.0], [1.0]], [0, 1])
    model = fit(dataset, ridge=1e-6)
    assert model.converged
    assert all(math.isfinite(value) for value in (model.beta0, *model.beta))
    assert model.beta[0] > 0

    try:
        unpenalised = fit(dataset, ridge=0.0)
    except ConvergenceError:
        return
    assert not unpenalised.converged
