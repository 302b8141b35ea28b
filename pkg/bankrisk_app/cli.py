import argparse
import json
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

from .config import (
    KERNEL_NAMES,
    MODEL_KINDS,
    STRATIFIED_BY_DEFAULT,
    GridSpec,
    default_grid_axes,
    load_grid_spec,
    settings,
)
from .dataset import (
    BANK_ID_COLUMN,
    FeatureSchema,
    Quarter,
    SplitPair,
    clean,
    ingest_csv,
    load_schema,
    read_raw_csv,
    split,
    write_csv,
)
from .errors import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_UNEXPECTED,
    BankRiskError,
    ConfigError,
    ConvergenceError,
    DataError,
)
from .evaluation import evaluate, grid_results_frame, grid_search
from .forest import default_max_features
from .models import Classifier, SvmClassifier, check_schema, fit_classifier, load_model, save_model
from .observability import configure_logging, timed_stage, write_metrics
from .pipeline import ComparisonConfig, comparison_frame, run_comparison
from .presentation import (
    build_evaluation_payload,
    render_comparison,
    render_evaluation_report,
    render_grid_summary,
    render_training_report,
    render_trend_summary,
)
from .resample import SmoteConfig, balance
from .synth import generate
from .trend import probability_series, read_reports, series_frame, warning_summary


logger = logging.getLogger("BankRisk.cli")

MANIFEST_NAME = "manifest.json"
DIAGNOSTICS_NAME = "diagnostics.json"


@dataclass(frozen=True)
class RunConfig:
    command: str
    out: str
    seed: int
    schema: str
    jobs: int
    options: dict[str, Any] = field(default_factory=dict)

    def to_manifest(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "out": self.out,
            "seed": self.seed,
            "schema": self.schema,
            "jobs": self.jobs,
            "options": self.options,
        }

    @classmethod
    def from_manifest(cls, path: str | Path, out: str | None = None) -> "RunConfig":
        manifest_path = Path(path)
        if not manifest_path.exists():
            raise ConfigError(f"Manifest not found: {manifest_path}")
        try:
            payload = json.loads(manifest_path.read_text(encoding="utf-8"))
            return cls(
                command=str(payload["command"]),
                out=out or str(payload["out"]),
                seed=int(payload["seed"]),
                schema=str(payload["schema"]),
                jobs=int(payload["jobs"]),
                options=dict(payload["options"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Manifest {manifest_path} is malformed: {exc}") from exc


def write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def resolve_stratified(value: bool | None, schema_name: str) -> bool:
    if value is not None:
        return value
    return STRATIFIED_BY_DEFAULT.get(schema_name, True)


def resolve_params(kind: str, raw: dict[str, Any], feature_count: int) -> dict[str, Any]:
    if kind == "logreg":
        return {
            "ridge": raw.get("ridge") if raw.get("ridge") is not None else settings.logistic.ridge,
            "max_iter": raw.get("max_iter") or settings.logistic.max_iter,
            "grad_tol": settings.logistic.grad_tol,
        }
    if kind == "forest":
        return {
            "n_trees": raw.get("n_trees") or settings.forest.n_trees,
            "max_features": raw.get("max_features") or default_max_features(feature_count),
            "min_samples_split": settings.forest.min_samples_split,
            "bootstrap": raw.get("bootstrap", True),
        }
    if kind == "svm":
        kernel = raw.get("kernel") or settings.svm.kernel
        gamma = raw.get("gamma")
        if kernel == "rbf" and gamma is None:
            gamma = 1.0 / feature_count
        return {
            "C": raw.get("C") if raw.get("C") is not None else settings.svm.C,
            "kernel": kernel,
            "gamma": gamma if kernel == "rbf" else None,
            "tol": settings.svm.tol,
            "max_passes": raw.get("max_passes") or settings.svm.max_passes,
        }
    raise ConfigError(f"Unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


_HYPERPARAMETER_FLAGS = (
    "ridge",
    "max_iter",
    "n_trees",
    "max_features",
    "bootstrap",
    "C",
    "kernel",
    "gamma",
    "max_passes",
)
_SHARED_FLAGS = ("command", "out", "seed", "schema", "jobs", "log_level", "metrics_file")


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    schema = load_schema(args.schema)
    raw = {name: value for name, value in vars(args).items() if name not in _SHARED_FLAGS}
    options = {name: value for name, value in raw.items() if name not in _HYPERPARAMETER_FLAGS}

    if "stratified" in options:
        options["stratified"] = resolve_stratified(options["stratified"], args.schema)
    if args.command == "train":
        options["params"] = resolve_params(args.model, raw, len(schema))
    if args.command == "gridsearch":
        spec = (
            load_grid_spec(options["grid"], options["folds"], args.seed)
            if options.get("grid")
            else GridSpec(args.model, default_grid_axes(args.model, len(schema)), options["folds"], args.seed)
        )
        if spec.model != args.model:
            raise ConfigError(f"Grid file declares model {spec.model!r} but --model is {args.model!r}")
        options["grid_spec"] = spec.to_dict()
    if args.command == "compare":
        overrides = {}
        for path in options.get("grid") or []:
            spec = load_grid_spec(path, options["folds"], args.seed)
            overrides[spec.model] = spec
        options["grid_specs"] = {
            kind: (
                overrides[kind]
                if kind in overrides
                else GridSpec(kind, default_grid_axes(kind, len(schema)), options["folds"], args.seed)
            ).to_dict()
            for kind in options["models"]
        }

    return RunConfig(
        command=args.command,
        out=str(args.out),
        seed=int(args.seed),
        schema=str(args.schema),
        jobs=int(args.jobs),
        options=options,
    )


def _smote_config(config: RunConfig) -> SmoteConfig:
    return SmoteConfig(k=int(config.options["k"]), target_ratio=float(config.options["ratio"]), seed=config.seed)


def cmd_synth(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    dataset = generate(
        options["recipe"],
        int(options["active"]),
        int(options["bankrupt"]),
        schema,
        config.seed,
        quarters=int(options["quarters"]),
        start=Quarter.parse(options["start"]),
    )
    write_csv(dataset, out / options["output_name"])
    return EXIT_OK


def cmd_clean(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    dataset = ingest_csv(config.options["input"], schema, settings.label_column)
    write_csv(clean(dataset), out / "clean.csv")
    return EXIT_OK


def cmd_smote(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    dataset = ingest_csv(config.options["input"], schema, settings.label_column)
    write_csv(balance(dataset, _smote_config(config)), out / "smote.csv")
    return EXIT_OK


def cmd_split(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    dataset = ingest_csv(options["input"], schema, settings.label_column)
    pair = split(dataset, float(options["train_fraction"]), config.seed, bool(options["stratified"]))
    if options["smote_after_split"]:
        pair = SplitPair(
            train=balance(pair.train, _smote_config(config)),
            test=pair.test,
            seed=pair.seed,
            train_fraction=pair.train_fraction,
            stratified=pair.stratified,
        )
    write_csv(pair.train, out / "train.csv")
    write_csv(pair.test, out / "test.csv")
    return EXIT_OK


def _convergence_exit(classifier: Classifier, command: str, out: Path) -> int:
    if classifier.converged:
        return EXIT_OK
    write_json(
        out / DIAGNOSTICS_NAME,
        {"command": command, "error": "model did not converge", "kind": classifier.kind, "model": classifier.to_dict()},
    )
    logger.error("model_fit kind=%s converged=False; diagnostics written", classifier.kind)
    return EXIT_CONVERGENCE


def cmd_train(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    dataset = ingest_csv(options["input"], schema, settings.label_column)
    params = options["params"]
    with timed_stage(f"train_{options['model']}"):
        classifier = fit_classifier(options["model"], dataset, params, config.seed, config.jobs)
    save_model(classifier, out / "model.json")
    write_text(out / "training_report.txt", render_training_report(classifier, params, evaluate(classifier, dataset)))
    return _convergence_exit(classifier, config.command, out)


def cmd_evaluate(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    classifier = load_model(options["model_file"])
    check_schema(classifier, schema.codes)
    dataset = ingest_csv(options["input"], schema, settings.label_column)
    matrix = evaluate(classifier, dataset)
    disagreements = classifier.disagreements(dataset.features) if isinstance(classifier, SvmClassifier) else None
    write_json(out / "evaluation.json", build_evaluation_payload(classifier, matrix, disagreements))
    write_text(out / "evaluation.txt", render_evaluation_report(classifier, matrix, disagreements))
    return EXIT_OK


def cmd_gridsearch(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    dataset = ingest_csv(options["input"], schema, settings.label_column)
    spec = GridSpec.from_dict(options["grid_spec"], settings.evaluation.folds, config.seed)
    with timed_stage(f"grid_search_{spec.model}"):
        result = grid_search(dataset, spec, n_jobs=config.jobs)
    frame = grid_results_frame(result)
    frame.to_csv(out / "grid_results.csv", index=False, na_rep="", lineterminator="\n")
    write_text(out / "grid_summary.txt", render_grid_summary(result, frame))
    best = fit_classifier(spec.model, dataset, result.best_params, config.seed, config.jobs)
    save_model(best, out / "best_model.json")
    return _convergence_exit(best, config.command, out)


def _model_entries(entries: Sequence[str]) -> dict[str, Classifier]:
    models: dict[str, Classifier] = {}
    for entry in entries:
        name, separator, path = entry.partition("=")
        if not separator:
            name, path = "", entry
        classifier = load_model(path)
        name = name or classifier.kind
        if name in models:
            raise ConfigError(f"Trend model name {name!r} is used twice; name them as NAME=PATH")
        models[name] = classifier
    return models


def read_events(path: str | Path) -> dict[str, date]:
    frame = read_raw_csv(path, [BANK_ID_COLUMN, "event_date"])
    events: dict[str, date] = {}
    for position, row in enumerate(frame.to_dict(orient="records")):
        try:
            events[row[BANK_ID_COLUMN].strip()] = date.fromisoformat(row["event_date"].strip())
        except ValueError as exc:
            raise DataError(
                f"Row {position + 2}, column 'event_date': {row['event_date']!r} is not an ISO date"
            ) from exc
    return events


def cmd_trend(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    models = _model_entries(options["model_file"])
    for classifier in models.values():
        check_schema(classifier, schema.codes)
    reports = read_reports(options["reports"], schema)
    threshold = float(options["threshold"])
    all_series = [
        probability_series(models, bank_reports, bank_id=bank_id, threshold=threshold)
        for bank_id, bank_reports in sorted(reports.items())
    ]
    events = read_events(options["events"]) if options.get("events") else {}
    summary = warning_summary(all_series, events)
    series_frame(all_series).to_csv(out / "trend_series.csv", index=False, na_rep="", lineterminator="\n")
    write_json(out / "trend_summary.json", summary)
    write_text(out / "trend_summary.txt", render_trend_summary(summary, threshold))
    return EXIT_OK


def cmd_compare(config: RunConfig, schema: FeatureSchema, out: Path) -> int:
    options = config.options
    dataset = ingest_csv(options["input"], schema, settings.label_column)
    comparison_config = ComparisonConfig(
        seed=config.seed,
        train_fraction=float(options["train_fraction"]),
        stratified=bool(options["stratified"]),
        smote_k=int(options["k"]),
        smote_ratio=float(options["ratio"]),
        smote_after_split=bool(options["smote_after_split"]),
        folds=int(options["folds"]),
        models=tuple(options["models"]),
        grids={
            kind: GridSpec.from_dict(payload, int(options["folds"]), config.seed)
            for kind, payload in options["grid_specs"].items()
        },
        n_jobs=config.jobs,
    )
    result = run_comparison(dataset, comparison_config)
    write_csv(result.prepared.split.train, out / "train.csv")
    write_csv(result.prepared.split.test, out / "test.csv")
    for outcome in result.outcomes:
        grid_results_frame(outcome.grid).to_csv(
            out / f"grid_{outcome.kind}.csv", index=False, na_rep="", lineterminator="\n"
        )
        save_model(outcome.classifier, out / f"model_{outcome.kind}.json")
    frame = comparison_frame(result)
    frame.to_csv(out / "comparison.csv", index=False, lineterminator="\n")
    write_text(out / "comparison.txt", render_comparison(frame, "Accuracy of each model"))
    if not all(outcome.classifier.converged for outcome in result.outcomes):
        logger.error("compare finished with unconverged models")
        return EXIT_CONVERGENCE
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, FeatureSchema, Path], int]] = {
    "synth": cmd_synth,
    "clean": cmd_clean,
    "smote": cmd_smote,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "trend": cmd_trend,
    "compare": cmd_compare,
}


def run(config: RunConfig) -> int:
    if config.command not in COMMANDS:
        raise ConfigError(f"Unknown command {config.command!r}")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / MANIFEST_NAME, config.to_manifest())
    schema = load_schema(config.schema)
    logger.info("command=%s out=%s seed=%s schema=%s", config.command, out, config.seed, config.schema)
    with timed_stage(config.command):
        return COMMANDS[config.command](config, schema, out)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_smote_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=_positive_int, default=settings.smote.k, help="SMOTE nearest neighbours")
    parser.add_argument(
        "--ratio",
        type=float,
        default=settings.smote.target_ratio,
        help="target minority/majority ratio after SMOTE",
    )


def _add_split_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--train-fraction", type=float, default=settings.split.train_fraction)
    parser.add_argument(
        "--stratified",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="stratify the split by class (default: on for commercial and custom schemas, off for rural)",
    )
    parser.add_argument(
        "--smote-after-split",
        action="store_true",
        help="apply SMOTE to the training part only, after splitting",
    )


def _add_hyperparameter_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ridge", type=float, default=None, help="logistic ridge penalty")
    parser.add_argument("--max-iter", type=_positive_int, default=None, help="logistic Newton iterations")
    parser.add_argument("--n-trees", "--B", dest="n_trees", type=_positive_int, default=None, help="forest size")
    parser.add_argument(
        "--max-features", "--p", dest="max_features", type=_positive_int, default=None, help="features tried per split"
    )
    parser.add_argument("--bootstrap", action=argparse.BooleanOptionalAction, default=True)
    parser.add_argument("--C", dest="C", type=float, default=None, help="SVM box constraint")
    parser.add_argument("--kernel", choices=KERNEL_NAMES, default=None)
    parser.add_argument("--gamma", type=float, default=None, help="RBF width (default 1/m)")
    parser.add_argument("--max-passes", type=_positive_int, default=None, help="SMO iteration budget per record")


def create_parser() -> argparse.ArgumentParser:
    logging_options = argparse.ArgumentParser(add_help=False)
    logging_options.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    logging_options.add_argument("--metrics-file", default=None, help="write Prometheus metrics here after the run")

    common = argparse.ArgumentParser(add_help=False, parents=[logging_options])
    common.add_argument("--seed", type=int, default=settings.default_seed, help="master seed for every random stream")
    common.add_argument("--schema", default="commercial", help="built-in schema name or schema JSON path")
    common.add_argument("--out", default=settings.output_directory, help="output directory")
    common.add_argument("--jobs", type=_positive_int, default=1, help="parallel workers for trees and grid points")

    parser = argparse.ArgumentParser(prog="bankrisk", description="Bank bankruptcy prediction toolkit")
    subparsers = parser.add_subparsers(dest="command")

    synth = subparsers.add_parser("synth", parents=[common], help="generate a seeded synthetic dataset")
    synth.add_argument("--recipe", default="gaussian-sep2", help="gaussian-sep<d>, xor-pair, xor-skew, quarterly-decline")
    synth.add_argument("--active", type=_positive_int, default=44)
    synth.add_argument("--bankrupt", type=_positive_int, default=21)
    synth.add_argument("--quarters", type=_positive_int, default=8, help="reports per bank for quarterly-decline")
    synth.add_argument("--start", default="2016-Q1", help="first quarter for quarterly-decline")
    synth.add_argument("--output-name", default="synthetic.csv")

    for name, help_text in (("clean", "drop records with missing values"), ("smote", "rebalance with SMOTE")):
        command = subparsers.add_parser(name, parents=[common], help=help_text)
        command.add_argument("--input", required=True)
        if name == "smote":
            _add_smote_flags(command)

    split_parser = subparsers.add_parser("split", parents=[common], help="split into train and test CSVs")
    split_parser.add_argument("--input", required=True)
    _add_split_flags(split_parser)
    _add_smote_flags(split_parser)

    train = subparsers.add_parser("train", parents=[common], help="fit one model")
    train.add_argument("--input", required=True)
    train.add_argument("--model", choices=MODEL_KINDS, required=True)
    _add_hyperparameter_flags(train)

    evaluate_parser = subparsers.add_parser("evaluate", parents=[common], help="confusion matrix and accuracy")
    evaluate_parser.add_argument("--input", required=True)
    evaluate_parser.add_argument("--model-file", required=True)

    gridsearch = subparsers.add_parser("gridsearch", parents=[common], help="cross-validated grid search")
    gridsearch.add_argument("--input", required=True)
    gridsearch.add_argument("--model", choices=MODEL_KINDS, required=True)
    gridsearch.add_argument("--grid", default=None, help="grid JSON {model, axes, folds, seed}")
    gridsearch.add_argument("--folds", type=_positive_int, default=settings.evaluation.folds)

    trend = subparsers.add_parser("trend", parents=[common], help="quarterly probability trend and early warnings")
    trend.add_argument("--reports", required=True, help="CSV with bank_id, period and feature columns")
    trend.add_argument("--model-file", action="append", required=True, help="[NAME=]PATH, repeatable")
    trend.add_argument("--events", default=None, help="CSV with bank_id and event_date columns")
    trend.add_argument("--threshold", type=float, default=settings.trend.threshold)

    compare = subparsers.add_parser("compare", parents=[common], help="full pipeline over every model")
    compare.add_argument("--input", required=True)
    compare.add_argument("--models", nargs="+", choices=MODEL_KINDS, default=list(MODEL_KINDS))
    compare.add_argument("--grid", action="append", default=None, help="grid JSON overriding one model's defaults")
    compare.add_argument("--folds", type=_positive_int, default=settings.evaluation.folds)
    _add_split_flags(compare)
    _add_smote_flags(compare)

    replay = subparsers.add_parser("replay", parents=[logging_options], help="re-run a manifest")
    replay.add_argument("manifest")
    replay.add_argument("--out", default=None, help="output directory (default: the manifest's)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    configure_logging(args.log_level)

    out_directory = args.out or settings.output_directory
    try:
        if args.command == "replay":
            config = RunConfig.from_manifest(args.manifest, args.out)
        else:
            config = resolve_run_config(args)
        out_directory = config.out
        code = run(config)
    except BankRiskError as exc:
        logger.error("command=%s failed exit_code=%s error=%s", args.command, exc.exit_code, exc)
        if isinstance(exc, ConvergenceError):
            write_json(Path(out_directory) / DIAGNOSTICS_NAME, {"command": args.command, "error": str(exc)})
        code = exc.exit_code
    except Exception:
        logger.exception("command=%s failed unexpectedly", args.command)
        code = EXIT_UNEXPECTED

    if args.metrics_file:
        write_metrics(args.metrics_file)
    return code
