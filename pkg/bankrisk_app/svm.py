import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit

from .config import KERNEL_NAMES, settings
from .dataset import BANKRUPT, Dataset, Standardization
from .errors import ConfigError, DataError
from .logreg import newton_ascent


logger = logging.getLogger("BankRisk.svm")

# Curvature floor for pairs whose kernel rows coincide.
_TAU = 1e-12


@dataclass(frozen=True)
class Kernel:
    name: str = "linear"
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.name not in KERNEL_NAMES:
            raise ConfigError(f"Unknown kernel {self.name!r}; expected one of {KERNEL_NAMES}")
        if self.name == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ConfigError(f"RBF kernel needs gamma > 0, got {self.gamma}")

    @classmethod
    def linear(cls) -> "Kernel":
        return cls("linear")

    @classmethod
    def rbf(cls, gamma: float) -> "Kernel":
        return cls("rbf", float(gamma))

    def gram(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        if self.name == "linear":
            return left @ right.T
        return np.exp(-self.gamma * cdist(left, right, "sqeuclidean"))

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "gamma": self.gamma}


@dataclass(frozen=True)
class PlattParams:
    A: float
    B: float


@dataclass(frozen=True)
class SvmModel:
    schema_codes: tuple[str, ...]
    support_vectors: tuple[tuple[float, ...], ...]
    alphas: tuple[float, ...]
    sv_labels: tuple[int, ...]
    b: float
    kernel: Kernel
    C: float
    standardization: Standardization
    platt: PlattParams | None = None
    converged: bool = True
    iterations: int = 0

    def __post_init__(self) -> None:
        if not len(self.support_vectors) == len(self.alphas) == len(self.sv_labels):
            raise ConfigError("Support vectors, alphas and labels must have equal lengths")
        if any(not 0 < alpha <= self.C * (1 + 1e-12) for alpha in self.alphas):
            raise ConfigError(f"Every stored alpha must lie in (0, C={self.C}]")

    @cached_property
    def sv_matrix(self) -> np.ndarray:
        return np.asarray(self.support_vectors, dtype=float).reshape(len(self.alphas), len(self.schema_codes))

    @cached_property
    def dual_weights(self) -> np.ndarray:
        return np.asarray(self.alphas) * np.asarray(self.sv_labels)

    @cached_property
    def weight_vector(self) -> np.ndarray | None:
        if self.kernel.name != "linear":
            return None
        return self.dual_weights @ self.sv_matrix

    def dual_objective(self) -> float:
        gram = self.kernel.gram(self.sv_matrix, self.sv_matrix)
        return float(np.sum(self.alphas) - 0.5 * self.dual_weights @ gram @ self.dual_weights)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_codes": list(self.schema_codes),
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "support_vectors": [list(vector) for vector in self.support_vectors],
            "alphas": list(self.alphas),
            "labels": list(self.sv_labels),
            "b": self.b,
            "platt": {"A": self.platt.A, "B": self.platt.B} if self.platt else None,
            "standardization": self.standardization.to_dict(),
            "diagnostics": {"converged": self.converged, "iterations": self.iterations},
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "SvmModel":
        kernel = payload["kernel"]
        platt = payload.get("platt")
        diagnostics = payload.get("diagnostics", {})
        return cls(
            schema_codes=tuple(payload["schema_codes"]),
            support_vectors=tuple(tuple(float(value) for value in vector) for vector in payload["support_vectors"]),
            alphas=tuple(float(value) for value in payload["alphas"]),
            sv_labels=tuple(int(value) for value in payload["labels"]),
            b=float(payload["b"]),
            kernel=Kernel(kernel["name"], kernel.get("gamma")),
            C=float(payload["C"]),
            standardization=Standardization.from_dict(payload["standardization"]),
            platt=PlattParams(float(platt["A"]), float(platt["B"])) if platt else None,
            converged=bool(diagnostics.get("converged", True)),
            iterations=int(diagnostics.get("iterations", 0)),
        )


def _standardized(model: SvmModel, features: np.ndarray) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(features, dtype=float))
    if matrix.shape[1] != len(model.schema_codes):
        raise ConfigError(f"Expected {len(model.schema_codes)} features, got {matrix.shape[1]}")
    return model.standardization.apply(matrix)


def kernel_expansion(model: SvmModel, features: np.ndarray) -> np.ndarray:
    scaled = _standardized(model, features)
    if not model.alphas:
        return np.full(scaled.shape[0], model.b)
    return model.kernel.gram(scaled, model.sv_matrix) @ model.dual_weights + model.b


def decision_values(model: SvmModel, features: np.ndarray) -> np.ndarray:
    weights = model.weight_vector
    if weights is None:
        return kernel_expansion(model, features)
    return _standardized(model, features) @ weights + model.b


def decision_value(model: SvmModel, x: np.ndarray) -> float:
    return float(decision_values(model, np.asarray(x, dtype=float).reshape(1, -1))[0])


def predict_labels(model: SvmModel, features: np.ndarray) -> np.ndarray:
    return (decision_values(model, features) >= 0).astype(int)


def _select_pair(alpha: np.ndarray, signs: np.ndarray, gradient: np.ndarray, C: float) -> tuple[int, int, float, float]:
    violation = -signs * gradient
    upper = ((signs > 0) & (alpha < C)) | ((signs < 0) & (alpha > 0))
    lower = ((signs < 0) & (alpha < C)) | ((signs > 0) & (alpha > 0))
    up_scores = np.where(upper, violation, -np.inf)
    low_scores = np.where(lower, violation, np.inf)
    i = int(np.argmax(up_scores))
    j = int(np.argmin(low_scores))
    return i, j, float(up_scores[i]), float(low_scores[j])


def _update_pair(alpha: np.ndarray, signs: np.ndarray, gradient: np.ndarray, Q: np.ndarray, i: int, j: int, C: float) -> None:
    if signs[i] != signs[j]:
        quad = max(Q[i, i] + Q[j, j] + 2 * Q[i, j], _TAU)
        delta = (-gradient[i] - gradient[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, diff
        elif alpha[i] < 0:
            alpha[i], alpha[j] = 0.0, -diff
        if diff > 0:
            if alpha[i] > C:
                alpha[i], alpha[j] = C, C - diff
        elif alpha[j] > C:
            alpha[j], alpha[i] = C, C + diff
    else:
        quad = max(Q[i, i] + Q[j, j] - 2 * Q[i, j], _TAU)
        delta = (gradient[i] - gradient[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > C:
            if alpha[i] > C:
                alpha[i], alpha[j] = C, total - C
        elif alpha[j] < 0:
            alpha[j], alpha[i] = 0.0, total
        if total > C:
            if alpha[j] > C:
                alpha[j], alpha[i] = C, total - C
        elif alpha[i] < 0:
            alpha[i], alpha[j] = 0.0, total


def solve_dual(
    gram: np.ndarray,
    signs: np.ndarray,
    C: float,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, bool, int]:
    """Pairwise coordinate ascent on the soft-margin dual; returns (alpha, b, converged, iterations)."""
    n = signs.shape[0]
    Q = signs[:, np.newaxis] * signs[np.newaxis, :] * gram
    alpha = np.zeros(n)
    # gradient of 0.5*a'Qa - sum(a)
    gradient = -np.ones(n)
    converged = False
    iterations = 0

    while iterations < max_iter:
        i, j, upper, lower = _select_pair(alpha, signs, gradient, C)
        if upper - lower < tol:
            converged = True
            break
        old_i, old_j = alpha[i], alpha[j]
        _update_pair(alpha, signs, gradient, Q, i, j, C)
        gradient += Q[i] * (alpha[i] - old_i) + Q[j] * (alpha[j] - old_j)
        iterations += 1

    errors = signs - (gradient + 1.0) * signs
    free = (alpha > settings.svm.support_threshold) & (alpha < C - settings.svm.support_threshold)
    if np.any(free):
        bias = float(np.mean(errors[free]))
    else:
        _, _, upper, lower = _select_pair(alpha, signs, gradient, C)
        bounds = [value for value in (upper, lower) if np.isfinite(value)]
        bias = float(np.mean(bounds)) if bounds else 0.0
    return alpha, bias, converged, iterations


def fit_svm(
    dataset: Dataset,
    C: float = settings.svm.C,
    kernel: Kernel | None = None,
    tol: float = settings.svm.tol,
    max_passes: int = settings.svm.max_passes,
    seed: int = settings.default_seed,
) -> SvmModel:
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    kernel = kernel or Kernel.linear()
    if len(np.unique(dataset.labels)) < 2:
        raise DataError("SVM training needs both classes present")

    standardization = Standardization.fit(dataset.features)
    # the seed fixes the visiting order, which decides selection ties
    order = np.random.default_rng(seed).permutation(dataset.n)
    features = standardization.apply(dataset.features)[order]
    signs = np.where(dataset.labels[order] == BANKRUPT, 1.0, -1.0)

    alpha, bias, converged, iterations = solve_dual(
        kernel.gram(features, features),
        signs,
        C,
        tol,
        max_passes * dataset.n,
    )
    if not converged:
        logger.warning("svm max_passes exhausted iterations=%s; KKT conditions not met within tol", iterations)

    keep = np.flatnonzero(alpha > settings.svm.support_threshold)
    keep = keep[np.argsort(order[keep])]
    model = SvmModel(
        schema_codes=dataset.schema.codes,
        support_vectors=tuple(tuple(float(value) for value in features[index]) for index in keep),
        alphas=tuple(float(min(alpha[index], C)) for index in keep),
        sv_labels=tuple(int(signs[index]) for index in keep),
        b=bias,
        kernel=kernel,
        C=C,
        standardization=standardization,
        converged=converged,
        iterations=iterations,
    )
    logger.info(
        "model_fit kind=svm kernel=%s C=%s converged=%s iterations=%s support_vectors=%s",
        kernel.name,
        C,
        converged,
        iterations,
        len(keep),
    )
    return model


def fit_platt(model: SvmModel, dataset: Dataset, max_iter: int = settings.svm.platt_max_iter) -> SvmModel:
    if dataset.n == 0 or len(np.unique(dataset.labels)) < 2:
        raise DataError("Platt scaling needs a dataset with both classes")
    values = decision_values(model, dataset.features)
    if np.ptp(values) <= 1e-12:
        raise DataError("Platt scaling failed: all decision values are identical")

    design = np.column_stack([np.ones(dataset.n), values])
    penalty = np.array([0.0, settings.svm.platt_ridge])
    result = newton_ascent(design, dataset.labels.astype(float), penalty, max_iter, settings.logistic.grad_tol)
    if not result.converged:
        logger.warning("platt not converged iterations=%s grad_norm=%.3e", result.iterations, result.grad_norm)

    platt = PlattParams(A=-float(result.theta[1]), B=-float(result.theta[0]))
    logger.info("platt_fit A=%.6f B=%.6f", platt.A, platt.B)
    return replace(model, platt=platt)


def platt_probability(platt: PlattParams, values: np.ndarray) -> np.ndarray:
    return expit(-(platt.A * np.asarray(values, dtype=float) + platt.B))


def svm_proba_many(model: SvmModel, features: np.ndarray) -> np.ndarray:
    if model.platt is None:
        raise ConfigError("SVM model has no Platt parameters; run fit_platt first")
    return platt_probability(model.platt, decision_values(model, features))


def svm_proba(model: SvmModel, x: np.ndarray) -> float:
    return float(svm_proba_many(model, np.asarray(x, dtype=float).reshape(1, -1))[0])


def sign_disagreements(model: SvmModel, features: np.ndarray) -> int:
    if model.platt is None:
        return 0
    values = decision_values(model, features)
    by_sign = values >= 0
    by_probability = platt_probability(model.platt, values) >= 0.5
    return int(np.sum(by_sign != by_probability))
