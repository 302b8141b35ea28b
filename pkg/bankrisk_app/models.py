import json
import logging
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, ClassVar, Protocol

import numpy as np

from .config import MODEL_KINDS, settings
from .dataset import Dataset
from .errors import ConfigError, DataError, MissingFileError
from .forest import Forest, fit_forest, forest_predict, forest_proba_many
from .logreg import LogisticModel, fit, predict_proba_many
from .observability import record_model_fit
from .svm import Kernel, SvmModel, decision_values, fit_platt, fit_svm, sign_disagreements, svm_proba_many


logger = logging.getLogger("BankRisk.models")


class Classifier(Protocol):
    kind: ClassVar[str]

    @property
    def schema_codes(self) -> tuple[str, ...]: ...

    @property
    def converged(self) -> bool: ...

    def predict(self, features: np.ndarray) -> np.ndarray: ...

    def predict_proba(self, features: np.ndarray) -> np.ndarray: ...

    def to_dict(self) -> dict[str, Any]: ...


@dataclass(frozen=True)
class LogisticClassifier:
    model: LogisticModel
    kind: ClassVar[str] = "logreg"

    @property
    def schema_codes(self) -> tuple[str, ...]:
        return self.model.schema_codes

    @property
    def converged(self) -> bool:
        return self.model.converged

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return predict_proba_many(self.model, features)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.predict_proba(features) >= 0.5).astype(int)

    def to_dict(self) -> dict[str, Any]:
        return self.model.to_dict()


@dataclass(frozen=True)
class ForestClassifier:
    model: Forest
    kind: ClassVar[str] = "forest"

    @property
    def schema_codes(self) -> tuple[str, ...]:
        return self.model.schema_codes

    @property
    def converged(self) -> bool:
        return True

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return forest_proba_many(self.model, features)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return forest_predict(self.model, features)

    def to_dict(self) -> dict[str, Any]:
        return self.model.to_dict()


@dataclass(frozen=True)
class SvmClassifier:
    model: SvmModel
    kind: ClassVar[str] = "svm"

    @property
    def schema_codes(self) -> tuple[str, ...]:
        return self.model.schema_codes

    @property
    def converged(self) -> bool:
        return self.model.converged

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return svm_proba_many(self.model, features)

    def predict(self, features: np.ndarray) -> np.ndarray:
        # class follows the sign of f(x), never the Platt probability
        return (decision_values(self.model, features) >= 0).astype(int)

    def disagreements(self, features: np.ndarray) -> int:
        return sign_disagreements(self.model, features)

    def to_dict(self) -> dict[str, Any]:
        return self.model.to_dict()


def resolve_kernel(name: str, gamma: float | None, feature_count: int) -> Kernel:
    if name == "rbf":
        return Kernel.rbf(gamma if gamma is not None else 1.0 / max(1, feature_count))
    return Kernel(name, gamma)


def fit_classifier(
    kind: str,
    dataset: Dataset,
    params: Mapping[str, Any],
    seed: int,
    n_jobs: int = 1,
) -> Classifier:
    started_at = time.perf_counter()
    classifier: Classifier
    if kind == "logreg":
        classifier = LogisticClassifier(
            fit(
                dataset,
                ridge=float(params.get("ridge", settings.logistic.ridge)),
                max_iter=int(params.get("max_iter", settings.logistic.max_iter)),
                grad_tol=float(params.get("grad_tol", settings.logistic.grad_tol)),
            )
        )
    elif kind == "forest":
        max_features = params.get("max_features")
        classifier = ForestClassifier(
            fit_forest(
                dataset,
                n_trees=int(params.get("n_trees", settings.forest.n_trees)),
                max_features=int(max_features) if max_features is not None else None,
                seed=seed,
                bootstrap=bool(params.get("bootstrap", True)),
                min_samples_split=int(params.get("min_samples_split", settings.forest.min_samples_split)),
                n_jobs=n_jobs,
            )
        )
    elif kind == "svm":
        gamma = params.get("gamma")
        kernel = resolve_kernel(
            str(params.get("kernel", settings.svm.kernel)),
            float(gamma) if gamma is not None else None,
            dataset.m,
        )
        model = fit_svm(
            dataset,
            C=float(params.get("C", settings.svm.C)),
            kernel=kernel,
            tol=float(params.get("tol", settings.svm.tol)),
            max_passes=int(params.get("max_passes", settings.svm.max_passes)),
            seed=seed,
        )
        classifier = SvmClassifier(fit_platt(model, dataset))
    else:
        raise ConfigError(f"Unknown model kind {kind!r}; expected one of {MODEL_KINDS}")

    record_model_fit(kind, classifier.converged, time.perf_counter() - started_at)
    return classifier


def make_factory(
    kind: str,
    params: Mapping[str, Any],
    seed: int,
    n_jobs: int = 1,
) -> Callable[[Dataset], Classifier]:
    frozen_params = dict(params)

    def factory(dataset: Dataset) -> Classifier:
        return fit_classifier(kind, dataset, frozen_params, seed, n_jobs)

    return factory


def classifier_from_dict(payload: Mapping[str, Any]) -> Classifier:
    kind = payload.get("kind")
    model = payload.get("model")
    if model is None:
        raise ConfigError("Model file lacks a 'model' object")
    if kind == "logreg":
        return LogisticClassifier(LogisticModel.from_dict(model))
    if kind == "forest":
        return ForestClassifier(Forest.from_dict(model))
    if kind == "svm":
        return SvmClassifier(SvmModel.from_dict(model))
    raise ConfigError(f"Unknown model kind {kind!r} in model file")


def save_model(classifier: Classifier, path: str | Path) -> None:
    model_path = Path(path)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"kind": classifier.kind, "model": classifier.to_dict()}
    model_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Classifier:
    model_path = Path(path)
    if not model_path.exists():
        raise MissingFileError(str(model_path))
    try:
        payload = json.loads(model_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Model file {model_path} is not valid JSON: {exc}") from exc
    return classifier_from_dict(payload)


def check_schema(classifier: Classifier, dataset_codes: tuple[str, ...]) -> None:
    if tuple(classifier.schema_codes) != tuple(dataset_codes):
        raise DataError(
            f"Model schema {list(classifier.schema_codes)} does not match data schema {list(dataset_codes)}"
        )
