import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import expit

from .config import settings
from .dataset import Dataset, Standardization
from .errors import ConfigError, ConvergenceError, DataError


logger = logging.getLogger("BankRisk.logreg")


@dataclass(frozen=True)
class NewtonResult:
    theta: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    objective_trace: tuple[float, ...]


@dataclass(frozen=True)
class LogisticModel:
    schema_codes: tuple[str, ...]
    beta0: float
    beta: tuple[float, ...]
    converged: bool
    iterations: int
    final_grad_norm: float
    ridge: float
    standardization: Standardization | None = None

    def __post_init__(self) -> None:
        if len(self.beta) != len(self.schema_codes):
            raise ConfigError(
                f"Model has {len(self.beta)} coefficients for {len(self.schema_codes)} features"
            )
        if not all(math.isfinite(value) for value in (self.beta0, *self.beta)):
            raise ConvergenceError("Logistic coefficients are not finite")

    def raw_coefficients(self) -> tuple[float, np.ndarray]:
        beta = np.asarray(self.beta, dtype=float)
        if self.standardization is None:
            return self.beta0, beta
        mean = np.asarray(self.standardization.mean)
        scale = np.asarray(self.standardization.scale)
        raw_beta = beta / scale
        return float(self.beta0 - np.dot(raw_beta, mean)), raw_beta

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_codes": list(self.schema_codes),
            "beta0": self.beta0,
            "beta": list(self.beta),
            "standardization": self.standardization.to_dict() if self.standardization else None,
            "diagnostics": {
                "converged": self.converged,
                "iterations": self.iterations,
                "final_grad_norm": self.final_grad_norm,
                "ridge": self.ridge,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "LogisticModel":
        diagnostics = payload["diagnostics"]
        standardization = payload.get("standardization")
        return cls(
            schema_codes=tuple(payload["schema_codes"]),
            beta0=float(payload["beta0"]),
            beta=tuple(float(value) for value in payload["beta"]),
            converged=bool(diagnostics["converged"]),
            iterations=int(diagnostics["iterations"]),
            final_grad_norm=float(diagnostics["final_grad_norm"]),
            ridge=float(diagnostics["ridge"]),
            standardization=Standardization.from_dict(standardization) if standardization else None,
        )


def _check_vector(model: LogisticModel, x: np.ndarray) -> np.ndarray:
    vector = np.asarray(x, dtype=float).reshape(-1)
    if vector.shape[0] != len(model.beta):
        raise ConfigError(f"Expected {len(model.beta)} features, got {vector.shape[0]}")
    if not np.all(np.isfinite(vector)):
        raise DataError("Feature vector contains non-finite values")
    return vector


def decision_scores(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(features, dtype=float))
    if matrix.shape[1] != len(model.beta):
        raise ConfigError(f"Expected {len(model.beta)} features, got {matrix.shape[1]}")
    if model.standardization is not None:
        matrix = model.standardization.apply(matrix)
    return model.beta0 + matrix @ np.asarray(model.beta, dtype=float)


def predict_proba(model: LogisticModel, x: np.ndarray) -> float:
    vector = _check_vector(model, x)
    return float(expit(decision_scores(model, vector)[0]))


def predict_proba_many(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    return expit(decision_scores(model, features))


def _require_dimensions(beta: np.ndarray, dataset: Dataset) -> None:
    if beta.shape[0] != dataset.m:
        raise ConfigError(f"Expected {dataset.m} coefficients, got {beta.shape[0]}")


def log_likelihood(beta0: float, beta: np.ndarray, dataset: Dataset) -> float:
    coefficients = np.asarray(beta, dtype=float).reshape(-1)
    _require_dimensions(coefficients, dataset)
    if dataset.n == 0:
        raise DataError("log-likelihood of an empty dataset is undefined")

    eps = settings.logistic.probability_clip
    probabilities = np.clip(expit(beta0 + dataset.features @ coefficients), eps, 1 - eps)
    labels = dataset.labels
    return float(np.sum(labels * np.log(probabilities) + (1 - labels) * np.log(1 - probabilities)))


def score(beta0: float, beta: np.ndarray, dataset: Dataset) -> tuple[float, np.ndarray]:
    coefficients = np.asarray(beta, dtype=float).reshape(-1)
    _require_dimensions(coefficients, dataset)
    residuals = dataset.labels - expit(beta0 + dataset.features @ coefficients)
    return float(np.sum(residuals)), dataset.features.T @ residuals


def _penalized_objective(theta: np.ndarray, design: np.ndarray, targets: np.ndarray, penalty: np.ndarray) -> float:
    linear = design @ theta
    # log(1 + e^z) without overflow
    likelihood = float(np.sum(targets * linear - np.logaddexp(0.0, linear)))
    return likelihood - 0.5 * float(np.sum(penalty * theta**2))


def newton_ascent(
    design: np.ndarray,
    targets: np.ndarray,
    penalty: np.ndarray,
    max_iter: int,
    grad_tol: float,
) -> NewtonResult:
    """Maximise sum(t*z - log(1+e^z)) - 0.5*sum(penalty*theta^2) with z = design @ theta."""
    theta = np.zeros(design.shape[1])
    objective = _penalized_objective(theta, design, targets, penalty)
    trace = [objective]
    grad_norm = math.inf
    iterations = 0

    for iterations in range(max_iter + 1):
        probabilities = expit(design @ theta)
        gradient = design.T @ (targets - probabilities) - penalty * theta
        grad_norm = float(np.linalg.norm(gradient))
        if grad_norm <= grad_tol or iterations == max_iter:
            break

        weights = probabilities * (1.0 - probabilities)
        hessian = (design * weights[:, np.newaxis]).T @ design + np.diag(penalty)
        try:
            direction = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            if not np.any(penalty > 0):
                raise ConvergenceError(
                    "Singular Hessian in logistic fit; set ridge > 0 to stabilise the solution"
                ) from None
            direction = np.linalg.lstsq(hessian, gradient, rcond=None)[0]

        # gains below the objective's rounding error count as no loss
        slack = settings.logistic.objective_rtol * (1.0 + abs(objective))
        step = 1.0
        while step >= settings.logistic.min_step:
            candidate = theta + step * direction
            candidate_objective = _penalized_objective(candidate, design, targets, penalty)
            if candidate_objective >= objective - slack:
                break
            step /= 2.0
        else:
            logger.warning("newton_stalled iteration=%s grad_norm=%.3e", iterations, grad_norm)
            break

        theta = candidate
        objective = candidate_objective
        trace.append(objective)

    return NewtonResult(
        theta=theta,
        converged=grad_norm <= grad_tol,
        iterations=iterations,
        grad_norm=grad_norm,
        objective_trace=tuple(trace),
    )


def _intercept_only(dataset: Dataset, ridge: float, standardization: Standardization | None) -> LogisticModel:
    eps = settings.logistic.probability_clip
    rate = min(max(float(dataset.labels.mean()), eps), 1 - eps)
    return LogisticModel(
        schema_codes=dataset.schema.codes,
        beta0=math.log(rate / (1 - rate)),
        beta=(0.0,) * dataset.m,
        converged=True,
        iterations=0,
        final_grad_norm=0.0,
        ridge=ridge,
        standardization=standardization,
    )


def fit(
    dataset: Dataset,
    ridge: float = settings.logistic.ridge,
    max_iter: int = settings.logistic.max_iter,
    grad_tol: float = settings.logistic.grad_tol,
    standardize: bool = True,
) -> LogisticModel:
    if dataset.n == 0:
        raise DataError("Cannot fit logistic regression on an empty dataset")
    if ridge < 0:
        raise ConfigError(f"ridge must be non-negative, got {ridge}")

    standardization = Standardization.fit(dataset.features) if standardize and dataset.m > 0 else None
    features = standardization.apply(dataset.features) if standardization else dataset.features

    if len(np.unique(dataset.labels)) < 2:
        logger.warning("logreg single_class n=%s; fitting intercept-only model", dataset.n)
        return _intercept_only(dataset, ridge, standardization)

    design = np.hstack([np.ones((dataset.n, 1)), features])
    penalty = np.full(design.shape[1], ridge)
    # the intercept is not penalised
    penalty[0] = 0.0
    result = newton_ascent(design, dataset.labels.astype(float), penalty, max_iter, grad_tol)

    converged = result.converged
    if converged and ridge == 0:
        margins = (2 * dataset.labels - 1) * (design @ result.theta)
        if np.all(margins > 0):
            logger.warning("logreg complete_separation; the maximum likelihood estimate does not exist, set ridge > 0")
            converged = False

    model = LogisticModel(
        schema_codes=dataset.schema.codes,
        beta0=float(result.theta[0]),
        beta=tuple(float(value) for value in result.theta[1:]),
        converged=converged,
        iterations=result.iterations,
        final_grad_norm=result.grad_norm,
        ridge=ridge,
        standardization=standardization,
    )
    logger.info(
        "model_fit kind=logreg converged=%s iterations=%s grad_norm=%.3e",
        model.converged,
        model.iterations,
        model.final_grad_norm,
    )
    return model
