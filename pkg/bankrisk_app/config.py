import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError


logger = logging.getLogger("BankRisk.config")

MODEL_KINDS = ("logreg", "forest", "svm")
KERNEL_NAMES = ("linear", "rbf")

# Grid files may use the short symbols from the forest literature.
HYPERPARAMETER_ALIASES = {"B": "n_trees", "p": "max_features"}
HYPERPARAMETERS_BY_MODEL = {
    "logreg": ("ridge",),
    "forest": ("n_trees", "max_features"),
    "svm": ("C", "kernel", "gamma"),
}


COMMERCIAL_FEATURES = (
    ("CA1", "Shareholder's equity/total assets"),
    ("CA2", "Shareholder's equity/total loans"),
    ("CA3", "Shareholder's equity + net profit/total assets + off balance sheet commitments"),
    ("AQ1", "Permanent assets/total assets"),
    ("AQ2", "Total loans/total assets"),
    ("AQ3", "Loans under follow-up/total loans"),
    ("AQ4", "Specific provision/total loans"),
    ("AQ5", "Specific provision/total loans"),
    ("M1", "Personnel expenses/average assets"),
    ("E1", "Net profit/average assets"),
    ("E2", "Net profit/average shareholder's equity"),
    ("E3", "Income before taxes/average assets"),
    ("E4", "Interest income/total operating income"),
    ("E5", "Non-interest expenses/total operating income"),
    ("L1", "Liquid assets/total assets"),
    ("L2", "Total loans/total deposits"),
    ("SMR1", "Trading securities/total assets"),
    ("SMR2", "FX assets/FX liabilities"),
    ("SMR3", "Net interest income/average assets"),
    ("SMR4", "Net balance sheet position/total shareholder's equity"),
)

RURAL_FEATURES = (
    ("CAR", "Capital adequacy ratio: capital to risk weighted assets"),
    ("AssetQuality", "Classified earning assets to total earning assets"),
    ("NPM", "Net profit margin: net income to operating income"),
    ("ROA", "Return on assets: net income to total assets"),
    ("LDR", "Loan to deposit ratio: total lending to total deposits"),
)

BUILTIN_SCHEMAS = {
    "commercial": COMMERCIAL_FEATURES,
    "rural": RURAL_FEATURES,
}

# Commercial runs split exactly stratified, rural runs do not.
STRATIFIED_BY_DEFAULT = {"commercial": True, "rural": False}


def _get_path_env(name: str, default: str) -> str:
    raw = os.getenv(name, "").strip()
    return raw or default


@dataclass(frozen=True)
class SplitSettings:
    train_fraction: float


@dataclass(frozen=True)
class SmoteSettings:
    k: int
    target_ratio: float


@dataclass(frozen=True)
class LogisticSettings:
    ridge: float
    max_iter: int
    grad_tol: float
    probability_clip: float
    min_step: float
    objective_rtol: float


@dataclass(frozen=True)
class ForestSettings:
    n_trees: int
    min_samples_split: int


@dataclass(frozen=True)
class SvmSettings:
    C: float
    kernel: str
    tol: float
    max_passes: int
    support_threshold: float
    platt_max_iter: int
    platt_ridge: float


@dataclass(frozen=True)
class EvaluationSettings:
    folds: int


@dataclass(frozen=True)
class TrendSettings:
    threshold: float


@dataclass(frozen=True)
class AppSettings:
    output_directory: str
    templates_directory: str
    default_seed: int
    label_column: str
    split: SplitSettings
    smote: SmoteSettings
    logistic: LogisticSettings
    forest: ForestSettings
    svm: SvmSettings
    evaluation: EvaluationSettings
    trend: TrendSettings


@dataclass(frozen=True)
class GridSpec:
    model: str
    axes: dict[str, tuple[Any, ...]]
    folds: int
    seed: int

    def __post_init__(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"Unknown model kind {self.model!r}; expected one of {MODEL_KINDS}")
        if self.folds < 2:
            raise ConfigError(f"Grid search needs at least 2 folds, got {self.folds}")
        allowed = HYPERPARAMETERS_BY_MODEL[self.model]
        for name, values in self.axes.items():
            if name not in allowed:
                raise ConfigError(f"Unknown hyperparameter {name!r} for model {self.model!r}")
            if not values:
                raise ConfigError(f"Grid axis {name!r} is empty")

    @property
    def combination_count(self) -> int:
        return math.prod(len(values) for values in self.axes.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "axes": {name: list(values) for name, values in self.axes.items()},
            "folds": self.folds,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: Any, default_folds: int, default_seed: int) -> "GridSpec":
        if not isinstance(payload, dict) or "model" not in payload or "axes" not in payload:
            raise ConfigError("A grid must be an object with 'model' and 'axes'")
        if not isinstance(payload["axes"], dict):
            raise ConfigError("Grid 'axes' must map hyperparameter names to lists")
        return cls(
            model=str(payload["model"]),
            axes=normalize_axes(payload["axes"]),
            folds=int(payload.get("folds", default_folds)),
            seed=int(payload.get("seed", default_seed)),
        )


def default_grid_axes(model: str, feature_count: int) -> dict[str, tuple[Any, ...]]:
    if model == "logreg":
        return {"ridge": (1e-8, 1e-4, 1e-2)}
    if model == "forest":
        top = min(feature_count, math.ceil(math.sqrt(feature_count)) + 1)
        return {"n_trees": (50, 100, 200), "max_features": tuple(range(1, top + 1))}
    if model == "svm":
        return {"C": (0.1, 1.0, 10.0, 100.0), "kernel": ("linear", "rbf")}
    raise ConfigError(f"Unknown model kind {model!r}; expected one of {MODEL_KINDS}")


def normalize_axes(raw_axes: dict[str, list[Any]]) -> dict[str, tuple[Any, ...]]:
    axes: dict[str, tuple[Any, ...]] = {}
    for name, values in raw_axes.items():
        if not isinstance(values, list):
            raise ConfigError(f"Grid axis {name!r} must be a JSON list")
        axes[HYPERPARAMETER_ALIASES.get(name, name)] = tuple(values)
    return axes


def load_grid_spec(path: str | Path, default_folds: int, default_seed: int) -> GridSpec:
    grid_path = Path(path)
    if not grid_path.exists():
        raise ConfigError(f"Grid file not found: {grid_path}")
    try:
        payload = json.loads(grid_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Grid file {grid_path} is not valid JSON: {exc}") from exc
    try:
        return GridSpec.from_dict(payload, default_folds, default_seed)
    except ConfigError as exc:
        raise ConfigError(f"Grid file {grid_path}: {exc}") from exc


def load_settings() -> AppSettings:
    project_root = Path(__file__).resolve().parent.parent
    return AppSettings(
        output_directory=_get_path_env("BANKRISK_OUTPUT_DIR", "bankrisk-output"),
        templates_directory=str(project_root / "templates"),
        default_seed=0,
        label_column="label",
        split=SplitSettings(train_fraction=0.75),
        smote=SmoteSettings(k=5, target_ratio=1.0),
        logistic=LogisticSettings(
            ridge=1e-8,
            max_iter=100,
            grad_tol=1e-8,
            probability_clip=1e-15,
            min_step=1e-10,
            objective_rtol=1e-12,
        ),
        forest=ForestSettings(n_trees=100, min_samples_split=2),
        svm=SvmSettings(
            C=1.0,
            kernel="linear",
            tol=1e-3,
            max_passes=1000,
            support_threshold=1e-8,
            platt_max_iter=100,
            platt_ridge=1e-6,
        ),
        evaluation=EvaluationSettings(folds=5),
        trend=TrendSettings(threshold=0.5),
    )


settings = load_settings()
