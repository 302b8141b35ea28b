from collections.abc import Mapping
from typing import Any, TypedDict

import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from .config import settings
from .evaluation import ConfusionMatrix, GridSearchResult, accuracy, format_percent
from .models import Classifier, ForestClassifier, LogisticClassifier, SvmClassifier


class ConfusionTemplateContext(TypedDict):
    title: str
    tp: int
    fn: int
    fp: int
    tn: int
    accuracy: str


templates = Environment(
    loader=FileSystemLoader(settings.templates_directory),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
    autoescape=False,
)


def render(template_name: str, context: Mapping[str, Any]) -> str:
    return templates.get_template(template_name).render(**context)


def build_confusion_context(matrix: ConfusionMatrix, title: str) -> ConfusionTemplateContext:
    return {
        "title": title,
        "tp": matrix.tp,
        "fn": matrix.fn,
        "fp": matrix.fp,
        "tn": matrix.tn,
        "accuracy": format_percent(accuracy(matrix)),
    }


def render_confusion(matrix: ConfusionMatrix, title: str) -> str:
    return render("confusion_matrix.txt", build_confusion_context(matrix, title))


def format_number(value: Any) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def model_details(classifier: Classifier) -> dict[str, str]:
    if isinstance(classifier, LogisticClassifier):
        model = classifier.model
        intercept, coefficients = model.raw_coefficients()
        details = {
            "ridge": format_number(model.ridge),
            "iterations": format_number(model.iterations),
            "final_grad_norm": format_number(model.final_grad_norm),
            "intercept (raw units)": format_number(intercept),
        }
        for code, coefficient in zip(model.schema_codes, coefficients, strict=True):
            details[f"coef {code}"] = format_number(float(coefficient))
        return details
    if isinstance(classifier, ForestClassifier):
        forest = classifier.model
        return {
            "B": format_number(forest.n_trees),
            "p": format_number(forest.max_features),
            "bootstrap": format_number(forest.bootstrap),
            "out_of_bag_accuracy": (
                format_percent(forest.oob_accuracy) if forest.oob_accuracy is not None else "n/a"
            ),
        }
    if isinstance(classifier, SvmClassifier):
        svm = classifier.model
        return {
            "kernel": svm.kernel.name,
            "gamma": format_number(svm.kernel.gamma),
            "C": format_number(svm.C),
            "support_vectors": format_number(len(svm.alphas)),
            "b": format_number(svm.b),
            "dual_objective": format_number(svm.dual_objective()),
            "iterations": format_number(svm.iterations),
            "platt_A": format_number(svm.platt.A if svm.platt else None),
            "platt_B": format_number(svm.platt.B if svm.platt else None),
        }
    return {}


def render_training_report(
    classifier: Classifier,
    params: Mapping[str, Any],
    train_matrix: ConfusionMatrix,
) -> str:
    return render(
        "training_report.txt",
        {
            "kind": classifier.kind,
            "converged": classifier.converged,
            "params": {name: format_number(value) for name, value in params.items()},
            "details": model_details(classifier),
            "confusion": render_confusion(train_matrix, "Training data"),
        },
    )


def render_evaluation_report(
    classifier: Classifier,
    matrix: ConfusionMatrix,
    disagreements: int | None = None,
) -> str:
    return render(
        "evaluation_report.txt",
        {
            "kind": classifier.kind,
            "confusion": render_confusion(matrix, "Testing data"),
            "disagreements": disagreements,
        },
    )


def build_evaluation_payload(
    classifier: Classifier,
    matrix: ConfusionMatrix,
    disagreements: int | None = None,
) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "model": classifier.kind,
        "confusion_matrix": matrix.to_dict(),
        "accuracy": accuracy(matrix),
        "accuracy_percent": format_percent(accuracy(matrix)),
    }
    if disagreements is not None:
        payload["sign_probability_disagreements"] = disagreements
    return payload


def build_comparison_view(comparison: pd.DataFrame) -> pd.DataFrame:
    view = comparison.copy()
    for column in ("train_accuracy", "test_accuracy"):
        view[column] = view[column].apply(format_percent)
    return view.rename(
        columns={"model": "Model", "train_accuracy": "Training Accuracy", "test_accuracy": "Testing Accuracy"}
    )


def render_comparison(comparison: pd.DataFrame, title: str) -> str:
    view = build_comparison_view(comparison)
    return render(
        "comparison.txt",
        {"title": title, "table": view[["Model", "Training Accuracy", "Testing Accuracy"]].to_string(index=False)},
    )


def render_grid_summary(result: GridSearchResult, results_frame: pd.DataFrame) -> str:
    return render(
        "grid_summary.txt",
        {
            "model": result.spec.model,
            "folds": result.spec.folds,
            "seed": result.spec.seed,
            "combinations": len(result.rows),
            "failed": sum(row.error is not None for row in result.rows),
            "best_params": {name: format_number(value) for name, value in result.best_params.items()},
            "best_score": format_percent(result.best_score),
            "table": results_frame.to_string(index=False, na_rep="-", float_format=lambda value: f"{value:.4f}"),
        },
    )


def render_trend_summary(summary: Mapping[str, Any], threshold: float) -> str:
    banks = []
    for bank_id, entry in summary.items():
        models = []
        for model, period in entry["warnings"].items():
            lead = entry["lead_times_months"].get(model)
            models.append({"name": model, "warning": period or "none", "lead": "n/a" if lead is None else lead})
        banks.append({"bank_id": bank_id, "event_date": entry["event_date"] or "n/a", "models": models})
    return render("trend_summary.txt", {"threshold": format_number(threshold), "banks": banks})
