import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile


logger = logging.getLogger("BankRisk")


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


REGISTRY = CollectorRegistry()

MODEL_FITS_TOTAL = Counter(
    "bankrisk_model_fits_total",
    "Model fits by model kind and outcome",
    ["kind", "outcome"],
    registry=REGISTRY,
)
MODEL_FIT_DURATION_SECONDS = Histogram(
    "bankrisk_model_fit_duration_seconds",
    "Model fit duration in seconds",
    ["kind"],
    registry=REGISTRY,
)
RECORDS_DROPPED_TOTAL = Counter(
    "bankrisk_records_dropped_total",
    "Records removed during cleaning",
    registry=REGISTRY,
)
SYNTHETIC_RECORDS_TOTAL = Counter(
    "bankrisk_synthetic_records_total",
    "Synthetic minority records created by SMOTE",
    registry=REGISTRY,
)
CV_FOLDS_SKIPPED_TOTAL = Counter(
    "bankrisk_cv_folds_skipped_total",
    "Cross-validation folds skipped because the training complement had one class",
    registry=REGISTRY,
)
EARLY_WARNINGS_TOTAL = Counter(
    "bankrisk_early_warnings_total",
    "Early warnings raised by trend analysis, by model",
    ["model"],
    registry=REGISTRY,
)


def record_model_fit(kind: str, converged: bool, elapsed_seconds: float) -> None:
    MODEL_FITS_TOTAL.labels(kind, "converged" if converged else "not_converged").inc()
    MODEL_FIT_DURATION_SECONDS.labels(kind).observe(elapsed_seconds)


def record_records_dropped(count: int) -> None:
    RECORDS_DROPPED_TOTAL.inc(count)


def record_synthetic_records(count: int) -> None:
    SYNTHETIC_RECORDS_TOTAL.inc(count)


def record_skipped_fold() -> None:
    CV_FOLDS_SKIPPED_TOTAL.inc()


def record_early_warning(model: str) -> None:
    EARLY_WARNINGS_TOTAL.labels(model).inc()


def write_metrics(path: str | Path) -> None:
    write_to_textfile(str(path), REGISTRY)


@contextmanager
def timed_stage(stage: str) -> Iterator[None]:
    started_at = time.perf_counter()
    try:
        yield
    finally:
        elapsed_ms = (time.perf_counter() - started_at) * 1000
        logger.info("stage=%s latency_ms=%.2f", stage, elapsed_ms)
