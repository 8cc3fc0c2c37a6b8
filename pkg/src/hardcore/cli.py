"""Command-line pipeline: validate, analyze, train, cross-validate, sweep,
evaluate, predict, and synthesize demo data.

Exit codes: 0 success, 1 usage error, 2 data/model error, 3 numeric failure
(training divergence).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import DataError, load_material
from .evaluation import (
    emit_report,
    pareto_sweep,
    relative_error_stats,
    write_sweep_csv,
)
from .features import (
    ClassifierConfig,
    DEFAULT_CLASSIFIER,
    FeatureBatch,
    build_features,
    classify_waveform,
)
from .magloss import area_error_stats, shoelace_power, write_histogram_csv, \
    write_summary_json
from .model import (
    MODEL_SUFFIX,
    HardcoreConfig,
    HardcoreModel,
    ModelError,
    load_model,
    parameter_count,
    save_model,
)
from .synthetic import generate_elliptic_dataset, write_material_dir
from .training import TrainConfig, TrainingDivergedError, cross_validate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def read_config(path: str | Path | None):
    """Parse the INI config into (TrainConfig, HardcoreConfig, ClassifierConfig,
    sweep topology list)."""
    train_cfg = TrainConfig()
    model_cfg = HardcoreConfig()
    classifier = DEFAULT_CLASSIFIER
    topologies: list[HardcoreConfig] = []
    if path is None:
        return train_cfg, model_cfg, classifier, topologies

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise DataError(f"config file {path} not found or unreadable")

    if parser.has_section("training"):
        train_cfg = TrainConfig.from_mapping(dict(parser.items("training")))
    if parser.has_section("model"):
        section = dict(parser.items("model"))
        kwargs = {}
        if "cnn_channels" in section:
            kwargs["cnn_channels"] = tuple(
                int(c) for c in section["cnn_channels"].replace("-", ",").split(",")
            )
        for key in ("kernel_size", "dilation"):
            if key in section:
                kwargs[key] = int(section[key])
        for key in ("scalar_mlp_width", "p_mlp_hidden"):
            if key in section:
                raw = section[key].strip().lower()
                kwargs[key] = None if raw in ("none", "") else int(section[key])
        model_cfg = HardcoreConfig(**kwargs)
    if parser.has_section("classifier"):
        section = dict(parser.items("classifier"))
        kwargs = {}
        for f in dataclasses.fields(ClassifierConfig):
            if f.name in section:
                cast = int if f.type == "int" else float
                kwargs[f.name] = cast(section[f.name])
        classifier = dataclasses.replace(DEFAULT_CLASSIFIER, **kwargs)
    if parser.has_section("sweep") and parser.has_option("sweep", "topologies"):
        for spec_str in parser.get("sweep", "topologies").split(";"):
            spec_str = spec_str.strip()
            if not spec_str:
                continue
            channels = tuple(int(c) for c in spec_str.split("-"))
            topologies.append(
                dataclasses.replace(model_cfg, cnn_channels=channels)
            )
    return train_cfg, model_cfg, classifier, topologies


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise _UsageError(f"cannot parse seed list {raw!r}") from None


def _load(args) -> "MaterialDataset":
    dataset = load_material(args.data_dir, material_id=args.material)
    return dataset


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    dataset = _load(args)
    print(f"material {dataset.material_id}: {len(dataset)} records")
    print(f"b_lim = {dataset.b_lim:.6g} T")
    if dataset.h_lim is not None:
        print(f"h_lim = {dataset.h_lim:.6g} A/m")
    classes: dict[str, int] = {}
    anomalies: list[str] = []
    for record in dataset.records:
        label = str(classify_waveform(record.b, args.classifier))
        classes[label] = classes.get(label, 0) + 1
        if record.h is not None:
            loss = shoelace_power(record.b, record.h, record.f)
            if loss.orientation <= 0:
                anomalies.append(
                    f"{record.record_id}: non-positive loop area "
                    f"{loss.area:.6g}"
                )
    for label in sorted(classes):
        print(f"waveform {label}: {classes[label]}")
    n_without_p = sum(1 for r in dataset.records if r.p is None)
    if n_without_p:
        print(f"records without measured loss: {n_without_p}")
    if anomalies:
        print(f"anomalies ({len(anomalies)}):")
        for line in anomalies:
            print(f"  {line}")
    else:
        print("anomalies: none")
    return EXIT_OK


def cmd_bh_analyze(args) -> int:
    dataset = _load(args)
    stats = area_error_stats(dataset, bins=args.bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_histogram_csv(stats, out / "area_error_histogram.csv")
    write_summary_json(stats, out / "area_error_summary.json")
    summary = stats.summary
    print(
        f"{summary['n']} loops analyzed ({summary['n_skipped']} skipped): "
        f"rel err mean {summary['mean']:+.4%}, "
        f"range [{summary['min']:+.4%}, {summary['max']:+.4%}]"
    )
    return EXIT_OK


def _write_predictions(path: Path, record_ids, p_hat) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "p_hat"])
        for rid, value in zip(record_ids, p_hat):
            writer.writerow([rid, repr(float(value))])


def _write_h_hat(path: Path, h_hat) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in h_hat:
            writer.writerow([repr(float(v)) for v in row])


def cmd_train(args) -> int:
    dataset = _load(args)
    train_cfg, model_cfg, classifier, _ = read_config(args.config)
    if args.epochs is not None:
        train_cfg = dataclasses.replace(train_cfg, k_epoch=args.epochs)
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)

    run = train(dataset, None, None, train_cfg,
                model_config=model_cfg, classifier=classifier)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / f"{dataset.material_id}{MODEL_SUFFIX}"
    save_model(run.model, model_path)
    run.write_log(out / "train_log.jsonl")

    usable = [r for r in dataset.records
              if r.h is not None and r.p is not None]
    batch = FeatureBatch(
        [build_features(r, run.model.norms, classifier) for r in usable],
        usable,
    )
    _, _, p_hat = run.model.predict(batch)
    _write_predictions(out / "train_predictions.csv", batch.record_ids, p_hat)

    report = relative_error_stats(
        p_hat, batch.p, material_id=dataset.material_id,
        parameter_count=parameter_count(model_cfg),
        model_file_bytes=model_path.stat().st_size,
    )
    emit_report(report, out, record_ids=batch.record_ids, history=run.history)
    print(
        f"trained {dataset.material_id} for {train_cfg.k_epoch} epochs: "
        f"model {model_path.name} "
        f"({parameter_count(model_cfg)} parameters), training-set "
        f"avg rel err {report.avg_rel_err:.4%}"
    )
    return EXIT_OK


def cmd_cv(args) -> int:
    dataset = _load(args)
    train_cfg, model_cfg, classifier, _ = read_config(args.config)
    if args.epochs is not None:
        train_cfg = dataclasses.replace(train_cfg, k_epoch=args.epochs)
    train_cfg = dataclasses.replace(train_cfg, k_folds=args.folds)
    seeds = _parse_seeds(args.seeds)

    result = cross_validate(dataset, train_cfg, seeds,
                            model_config=model_cfg, classifier=classifier)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for run in result.runs:
        run.write_log(
            out / f"train_log_seed{run.config.seed}_fold{run.fold_index}.jsonl"
        )
    summary = {
        "material_id": dataset.material_id,
        "k_folds": args.folds,
        "seeds": seeds,
        "best_seed": result.best_seed,
        "seed_mean_avg_rel_err": {
            str(s): e for s, e in result.seed_mean_avg_rel_err.items()
        },
        "runs": [
            {
                "seed": run.config.seed,
                "fold": run.fold_index,
                "val_avg_rel_err": run.val_avg_rel_err,
                "val_p95_rel_err": run.val_p95_rel_err,
            }
            for run in result.runs
        ],
    }
    with open(out / "cv_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    best = result.seed_mean_avg_rel_err[result.best_seed]
    print(
        f"cross-validated {dataset.material_id}: {len(result.runs)} runs, "
        f"best seed {result.best_seed} "
        f"(mean val avg rel err {best:.4%})"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset = _load(args)
    train_cfg, model_cfg, classifier, topologies = read_config(args.config)
    if args.epochs is not None:
        train_cfg = dataclasses.replace(train_cfg, k_epoch=args.epochs)
    train_cfg = dataclasses.replace(train_cfg, k_folds=args.folds)
    if not topologies:
        topologies = [
            model_cfg,
            dataclasses.replace(model_cfg, cnn_channels=(12, 1)),
        ]
    seeds = _parse_seeds(args.seeds)

    result = pareto_sweep(dataset, topologies, train_cfg, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(result, out / "sweep.csv")
    with open(out / "sweep_frontier.json", "w") as fh:
        json.dump(
            {
                "frontier": result.frontier,
                "topology_errors": result.topology_errors,
                "topology_parameters": result.topology_parameters,
            },
            fh, indent=2,
        )
        fh.write("\n")
    print(
        f"swept {len(topologies)} topologies x {len(seeds)} seeds x "
        f"{args.folds} folds; frontier: {', '.join(result.frontier)}"
    )
    return EXIT_OK


def _load_model_for_data(args, dataset) -> HardcoreModel:
    model = load_model(args.model)
    if model.material_id != dataset.material_id:
        raise ModelError(
            f"model was trained for material {model.material_id!r} but the "
            f"data directory holds {dataset.material_id!r}"
        )
    return model


def cmd_eval(args) -> int:
    dataset = _load(args)
    model = _load_model_for_data(args, dataset)
    _, _, classifier, _ = read_config(args.config)
    scored = [r for r in dataset.records if r.p is not None]
    if not scored:
        raise DataError("no records with measured losses to evaluate")
    batch = FeatureBatch(
        [build_features(r, model.norms, classifier) for r in scored], scored
    )
    _, _, p_hat = model.predict(batch)
    report = relative_error_stats(
        p_hat, batch.p, material_id=dataset.material_id,
        parameter_count=model.n_parameters(),
        model_file_bytes=Path(args.model).stat().st_size,
    )
    out = Path(args.out)
    emit_report(report, out, record_ids=batch.record_ids)
    print(
        f"evaluated {len(scored)} records: avg rel err "
        f"{report.avg_rel_err:.4%}, p95 {report.p95_rel_err:.4%}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    dataset = _load(args)
    model = _load_model_for_data(args, dataset)
    _, _, classifier, _ = read_config(args.config)
    batch = FeatureBatch(
        [build_features(r, model.norms, classifier) for r in dataset.records],
        dataset.records,
    )
    _, h_hat, p_hat = model.predict(batch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_predictions(out / "predictions.csv", batch.record_ids, p_hat)
    if args.emit_h:
        _write_h_hat(out / "h_hat.csv", h_hat)
    print(f"predicted {len(dataset)} records -> {out / 'predictions.csv'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    dataset = generate_elliptic_dataset(
        n_records=args.records, seed=args.seed, material_id=args.material
    )
    write_material_dir(dataset, args.out)
    print(f"wrote {len(dataset)} synthetic records to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="hardcore",
        description=(
            "Train, evaluate, and run residual dilated-CNN estimators of "
            "ferrite-core field strength and power loss."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=True, out=False, config=False, model=False):
        if data:
            p.add_argument("--data-dir", required=True,
                           help="per-material CSV directory")
            p.add_argument("--material", default=None,
                           help="material id (default: directory name)")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        if config:
            p.add_argument("--config", default=None,
                           help="INI config file (training/model/classifier)")
            p.add_argument("--epochs", type=int, default=None,
                           help="override epoch count")
        if model:
            p.add_argument("--model", required=True,
                           help=f"trained model file ({MODEL_SUFFIX})")

    p = sub.add_parser("validate", help="load a data directory and summarize it")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bh-analyze",
                       help="loop-area vs measured-loss discrepancy histogram")
    add_common(p, out=True)
    p.add_argument("--bins", type=int, default=61)
    p.set_defaults(func=cmd_bh_analyze)

    p = sub.add_parser("train", help="train a final model on all usable records")
    add_common(p, out=True, config=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    add_common(p, out=True, config=True)
    p.add_argument("--seeds", default="0,1,2,3,4",
                   help="comma-separated seed list")
    p.add_argument("--folds", type=int, default=4)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="topology size vs error Pareto sweep")
    add_common(p, out=True, config=True)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--folds", type=int, default=4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="competition metrics of a trained model")
    add_common(p, out=True, model=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="estimate losses (and optionally h)")
    add_common(p, out=True, model=True)
    p.add_argument("--config", default=None)
    p.add_argument("--emit-h", action="store_true",
                   help="also write h_hat sequences as 1024-column CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic demo material")
    p.add_argument("--out", required=True)
    p.add_argument("--records", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--material", default="SYNTH")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "config"):
            _, _, classifier, _ = read_config(args.config)
            args.classifier = classifier
        else:
            args.classifier = DEFAULT_CLASSIFIER
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
