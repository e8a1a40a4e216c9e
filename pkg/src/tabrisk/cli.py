"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  ``run`` executes the whole leak-free pipeline; the other
subcommands expose single stages working on CSV and model files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import serialization as ser
from .classical import DEFAULTS, ClassifierSpec, ConvergenceError, feature_importance, fit_classifier, fit_forest
from .classical.forest import RankedFeatures
from .data import DataError, ScalerParams, Schema, SmoteConfig, apply_scaler, fit_scaler, load_csv
from .data import IEEE_HEADER_ALIASES, smote, stratified_split, zscore_filter
from .eval import FoldData, cv_objective, evaluate_folds, confusion, metrics, roc_auc, tune
from .fixture import write_fixture
from .nomogram import (
    calibration_csv,
    calibration_curve,
    decision_csv,
    decision_curve,
    fit_nomogram,
    probability_of_score,
    score,
)
from .numerics import NumericError
from .pipeline import (
    ConfigError,
    PipelineConfig,
    TuningConfig,
    features_csv,
    load_bundle,
    load_dataset,
    roc_csv,
    run_pipeline,
)
from .rng import derive_int
from .stats import association_csv, association_json, association_table, association_text
from .tabtransformer import TabTransformer, build_model, feature_names, train
from .textio import csv_text, json_text, write_text

logger = logging.getLogger("tabrisk")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# --------------------------------------------------------------------------
# configuration assembly
# --------------------------------------------------------------------------

# flag destination -> dotted config key
_FLAG_KEYS = {
    "data": "data",
    "out": "output_dir",
    "seed": "seed",
    "tau": "tau",
    "alpha": "alpha",
    "folds": "k_folds",
    "holdout": "holdout_fraction",
    "top_n": "top_n",
    "mode": "mode",
    "epochs": "transformer.epochs",
    "trials": "tuning.trials",
    "method": "tuning.method",
    "tune_kind": "tuning.kind",
}


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file (if any) with command-line flags layered on top."""
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(base, dict):
            raise ConfigError("configuration must be a JSON object")
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = base
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    if getattr(args, "no_smote", False):
        base["smote"] = False
    return PipelineConfig.from_dict(base)


# --------------------------------------------------------------------------
# feature files
# --------------------------------------------------------------------------


def read_features(path: str | Path):
    """``(row_ids, x, y, names)`` from a features CSV written by ``extract``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["row_id"] or rows[0][-1:] != ["label"]:
        raise DataError(f"{path}: expected a header 'row_id, <features...>, label'")
    names = rows[0][1:-1]
    try:
        body = np.asarray([[float(t) for t in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from exc
    if body.ndim != 2 or body.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    return body[:, 0].astype(np.int64), body[:, 1:-1], body[:, -1].astype(np.int64), names


def select_columns(x: np.ndarray, names: list[str], ranking: str | None, top_n: int | None):
    if ranking is None:
        if top_n is not None:
            raise ConfigError("--top-n needs --ranking")
        return x, names
    ranked = RankedFeatures.from_csv(ranking, top_n or 10)
    order = ranked.order[: ranked.top_n]
    if ranked.top_n > x.shape[1] or (len(order) and order.max() >= x.shape[1]):
        raise DataError("ranking does not fit the feature file")
    return x[:, order], [names[i] for i in order]


def _params(text: str | None) -> dict:
    if not text:
        return {}
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ConfigError("--params must be a JSON object")
    return d


def _spec(kind: str, params: dict, seed: int) -> ClassifierSpec:
    try:
        return ClassifierSpec(kind, params, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _folds_from_features(row_ids, x, y, k: int, seed: int, use_smote: bool) -> list[FoldData]:
    plan, _ = stratified_split(y, k, 0.0, derive_int(seed, "split"))
    out = []
    for f in range(k):
        tr, te = plan.train_index(f), plan.test_index(f)
        xt, yt = x[tr], y[tr]
        if use_smote:
            xt, yt = smote(xt, yt, SmoteConfig(seed=derive_int(seed, "smote", f)))
        out.append(FoldData(f, row_ids[tr], row_ids[te], xt, yt, x[te], y[te]))
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_fixture(args) -> int:
    path = write_fixture(args.out, args.rows, args.seed)
    print(f"wrote {args.rows} synthetic rows to {path}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = build_config(args)
    ds, removal = zscore_filter(load_dataset(cfg), cfg.tau, cfg.zscore_columns)
    rows = association_table(ds, cfg.alpha)
    out = Path(cfg.output_dir)
    write_text(out / "association.json", association_json(rows, ds) + "\n")
    write_text(out / "association.csv", association_csv(rows))
    write_text(out / "filter_report.json", json_text(removal.to_dict()))
    text = association_text(rows, ds)
    write_text(out / "association.txt", text)
    print(f"{removal.n_in} rows loaded, {removal.n_in - removal.n_out} removed by the z-score filter")
    print(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = build_config(args)
    manifest = run_pipeline(cfg)
    out = Path(cfg.output_dir)
    board = json.loads((out / "leaderboard.json").read_text())["rows"]
    report = json.loads((out / "cv_report.json").read_text())
    print(f"run finished; {len(manifest.artifacts)} artifacts in {out}")
    print("leaderboard (mean CV accuracy):")
    for r in board:
        print(f"  {r['rank']:>2}. {r['model']:<28} {r['accuracy']:.4f}")
    m = report["mean"]
    print(f"tuned {cfg.tuning.kind}: accuracy {m['accuracy']:.4f}, AUC {m['auc']:.4f}, F1 {m['f1']:.4f}")
    return EXIT_OK


def cmd_train_transformer(args) -> int:
    cfg = build_config(args)
    ds, _ = zscore_filter(load_dataset(cfg), cfg.tau, cfg.zscore_columns)
    scaler = fit_scaler(ds) if cfg.scale else None
    fit_ds = apply_scaler(scaler, ds) if scaler else ds
    model = build_model(fit_ds, cfg.train_config())
    curve = train(model, fit_ds)
    out = Path(cfg.output_dir)
    payload = {"schema": ds.schema.to_dict(), "scaler": scaler.to_dict() if scaler else None,
               "transformer": model.to_dict()}
    ser.save(out / "extractor.json", payload, ds.schema, kind="extractor")
    write_text(out / "loss_curve.csv", csv_text(["epoch", "loss"], [[e + 1, v] for e, v in enumerate(curve)]))
    print(f"trained on {ds.n_rows} rows for {len(curve)} epochs; final loss {curve[-1]:.6f}")
    print(f"wrote {out / 'extractor.json'}")
    return EXIT_OK


def cmd_extract(args) -> int:
    doc = ser.read_document(args.model, kind="extractor")["payload"]
    schema = Schema.from_dict(doc["schema"])
    ds = load_csv(args.data, schema, IEEE_HEADER_ALIASES)
    if doc["scaler"] is not None:
        ds = apply_scaler(ScalerParams.from_dict(doc["scaler"]), ds)
    model = TabTransformer.from_dict(doc["transformer"])
    x = model.extract_features(ds.categorical_data, ds.numeric_data)
    write_text(args.out, features_csv(ds.row_ids, x, ds.labels, feature_names(model)))
    print(f"wrote {x.shape[0]} x {x.shape[1]} features to {args.out}")
    return EXIT_OK


def cmd_rank(args) -> int:
    _, x, y, names = read_features(args.features)
    forest = fit_forest(x, y, kind="random_forest", n_estimators=args.trees, seed=args.seed)
    ranked = feature_importance(forest, names, min(args.top_n, x.shape[1]))
    ranked.to_csv(args.out)
    for i, name, imp in ranked.ranked()[: ranked.top_n]:
        print(f"{name:<14} {imp:.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    _, x, y, names = read_features(args.features)
    x, names = select_columns(x, names, args.ranking, args.top_n)
    if not args.no_smote:
        x, y = smote(x, y, SmoteConfig(seed=derive_int(args.seed, "smote")))
    model = fit_classifier(_spec(args.kind, _params(args.params), args.seed), x, y)
    ser.save(args.out, model)
    print(f"trained {args.kind} on {len(y)} rows x {x.shape[1]} features; wrote {args.out}")
    return EXIT_OK


def cmd_tune(args) -> int:
    tc = TuningConfig(kind=args.kind, trials=args.trials, method=args.method, metric=args.metric)
    if args.space:
        try:
            tc.space = json.loads(Path(args.space).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--space: {exc}") from exc
    tc.validate()
    row_ids, x, y, names = read_features(args.features)
    x, names = select_columns(x, names, args.ranking, args.top_n)
    folds = _folds_from_features(row_ids, x, y, args.folds, args.seed, not args.no_smote)
    result = tune(tc.dimensions(), cv_objective(args.kind, folds, args.metric, seed=args.seed),
                  args.trials, args.seed, args.method)
    out = Path(args.out)
    write_text(out / "history.csv", result.history_csv())
    write_text(out / "best.json", json_text({"kind": args.kind, "metric": args.metric, "best": result.best.to_dict()}))
    print(f"best {args.metric} {result.best.objective:.4f} with {result.best.params}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    row_ids, x, y, names = read_features(args.features)
    x, names = select_columns(x, names, args.ranking, args.top_n)
    out = Path(args.out)
    if args.model:
        model = ser.load(args.model, kind="classifier")
        p = model.predict_proba(x)[:, 1]
        cm = confusion(y, (p >= 0.5).astype(np.int64))
        auc, curve = roc_auc(p, y) if 0 < y.sum() < len(y) else (None, None)
        write_text(out / "report.json", json_text({"n": len(y), "confusion": cm.to_dict(),
                                                    "metrics": metrics(cm, auc).to_dict()}))
        write_text(out / "roc.csv", roc_csv([("test", curve)]))
        print(json.dumps(metrics(cm, auc).to_dict(), indent=2))
        return EXIT_OK
    if not args.kind:
        raise ConfigError("evaluate needs --model or --kind")
    folds = _folds_from_features(row_ids, x, y, args.folds, args.seed, not args.no_smote)
    report = evaluate_folds(_spec(args.kind, _params(args.params), args.seed), folds)
    write_text(out / "cv_report.csv", report.to_csv())
    write_text(out / "cv_report.json", report.to_json())
    write_text(out / "roc_cv.csv", roc_csv([(f"fold_{f.fold + 1}", f.roc) for f in report.folds]))
    print(report.to_csv())
    return EXIT_OK


def cmd_nomogram(args) -> int:
    _, x, y, names = read_features(args.features)
    x, names = select_columns(x, names, args.ranking, args.top_n)
    exclude = [e for e in (args.exclude or "").split(",") if e]
    spec = fit_nomogram(x, y, names, exclude)
    out = Path(args.out)
    ser.save(out / "nomogram_model.json", spec)
    write_text(out / "nomogram.json", spec.to_json())
    write_text(out / "ticks.csv", spec.ticks_csv())
    probs = probability_of_score(spec, score(spec, x).total)
    write_text(out / "calibration.csv", calibration_csv(calibration_curve(probs, y)))
    write_text(out / "decision_curve.csv", decision_csv(decision_curve(probs, y)))
    for e in spec.excluded:
        print(f"excluded {e.name}: {e.reason} {e.detail}".rstrip())
    for f in spec.features:
        print(f"{f.name:<14} coef {f.coef:+.4f}  max points {spec.span(f):.3f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    bundle = load_bundle(args.bundle)
    ds = load_csv(args.data, bundle.schema, IEEE_HEADER_ALIASES)
    p = bundle.predict_proba(ds)
    write_text(args.out, csv_text(["row_id", "probability", "prediction"],
                                  [[int(i), float(v), int(v >= 0.5)] for i, v in zip(ds.row_ids, p)]))
    print(f"wrote {len(p)} predictions to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _pipeline_flags(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="JSON configuration file; flags below override it")
    if data:
        p.add_argument("--data", help="input CSV (config key: data)")
    p.add_argument("--out", help="output directory (config key: output_dir)")
    p.add_argument("--seed", type=int, help="master seed (config key: seed)")
    p.add_argument("--tau", type=float, help="z-score cut-off (config key: tau)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabrisk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"tabrisk {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="write a synthetic heart-disease-shaped CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=1190)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("stats", help="z-score filter and per-feature association tests")
    _pipeline_flags(p)
    p.add_argument("--alpha", type=float, help="normality-screen level (config key: alpha)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("run", help="full leak-free pipeline")
    _pipeline_flags(p)
    p.add_argument("--folds", type=int, help="config key: k_folds")
    p.add_argument("--holdout", type=float, help="config key: holdout_fraction")
    p.add_argument("--top-n", dest="top_n", type=int, help="config key: top_n")
    p.add_argument("--epochs", type=int, help="config key: transformer.epochs")
    p.add_argument("--trials", type=int, help="config key: tuning.trials")
    p.add_argument("--method", choices=("random", "tpe"), help="config key: tuning.method")
    p.add_argument("--tune-kind", dest="tune_kind", choices=sorted(DEFAULTS), help="config key: tuning.kind")
    p.add_argument("--mode", choices=("strict", "paper"), help="config key: mode")
    p.add_argument("--no-smote", action="store_true", help="config key: smote=false")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train-transformer", help="fit scaler + transformer on a whole CSV")
    _pipeline_flags(p)
    p.add_argument("--epochs", type=int, help="config key: transformer.epochs")
    p.set_defaults(func=cmd_train_transformer)

    p = sub.add_parser("extract", help="contextual feature vectors for every row of a CSV")
    p.add_argument("--model", required=True, help="extractor.json from train-transformer")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="features CSV")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("rank", help="random-forest impurity ranking of a features CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="ranking CSV")
    p.add_argument("--top-n", dest="top_n", type=int, default=10)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_rank)

    def downstream(p, kind_required=False):
        p.add_argument("--features", required=True)
        p.add_argument("--ranking", help="ranking CSV; keeps its top-N columns")
        p.add_argument("--top-n", dest="top_n", type=int)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-smote", action="store_true")
        p.add_argument("--kind", choices=sorted(DEFAULTS), required=kind_required)

    p = sub.add_parser("train", help="fit one classifier on a features CSV")
    downstream(p, kind_required=True)
    p.add_argument("--params", help="JSON object of hyperparameters")
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="hyperparameter search with cross-validated objective")
    downstream(p)
    p.set_defaults(kind="extra_trees")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--method", choices=("random", "tpe"), default="random")
    p.add_argument("--metric", choices=("accuracy", "auc", "f1"), default="accuracy")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--space", help="JSON file with the search space")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="score a saved model, or cross-validate a classifier kind")
    downstream(p)
    p.add_argument("--model", help="saved classifier to score on the features")
    p.add_argument("--params", help="JSON object of hyperparameters (with --kind)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("nomogram", help="points-based nomogram with calibration and decision curves")
    p.add_argument("--features", required=True)
    p.add_argument("--ranking")
    p.add_argument("--top-n", dest="top_n", type=int)
    p.add_argument("--exclude", help="comma-separated feature names to leave out")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_nomogram)

    p = sub.add_parser("predict", help="score a CSV with a run's models/bundle.json")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="predictions CSV")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ser.SerializationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining value errors come from data that cannot support the request
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
