"""Command-line interface: train, audit, synth, and sweep subcommands.

Configs and reports are JSON; plot-ready tables are CSV. Exit codes: 1 for
config errors, 2 for data errors, 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .confidence import BucketSpec, bucket_analysis, confidence_of, feature_histograms
from .data import (
    ColumnSpec,
    Dataset,
    Schema,
    SplitSpec,
    SynthConfig,
    apply_standardization,
    load_csv,
    split_dataset,
    standardize,
    synth_biased,
)
from .errors import ConfigError, DataError, NumericError, ReckonerError
from .metrics import fairness_report, largest_pair
from .pipeline import TrainConfig, predict, train
from .serial import round_float, sha256_hex, sha256_of_obj

log = logging.getLogger("reckoner")

SWEEPABLE = ("alpha", "confidence_threshold", "seed", "use_noise", "use_pseudo_learning")


def _setup_logging() -> None:
    level = os.environ.get("RECKONER_LOG", "error").lower()
    chosen = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}.get(level, logging.ERROR)
    logging.basicConfig(level=chosen, format="%(levelname)s %(name)s: %(message)s")


def _read_json(path: str | Path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"missing {what} file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {what} file {path}: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _resolve_train_config(args) -> tuple[TrainConfig, Schema, SplitSpec, dict]:
    doc = _read_json(args.config, "config")
    if not isinstance(doc, dict) or "train" not in doc or "schema" not in doc:
        raise ConfigError("config must be a JSON object with 'train' and 'schema' keys")
    cfg_dict = dict(doc["train"])
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    if getattr(args, "no_noise", False):
        cfg_dict["use_noise"] = False
    if getattr(args, "no_pseudo", False):
        cfg_dict["use_pseudo_learning"] = False
    cfg = TrainConfig.from_dict(cfg_dict)
    schema = Schema.from_dict(doc["schema"])
    split = SplitSpec.from_dict(doc.get(
        "split",
        {"train_fraction": 0.7, "valid_fraction": 0.15, "test_fraction": 0.15,
         "seed": cfg.seed},
    ))
    return cfg, schema, split, doc


def _run_training(cfg: TrainConfig, schema: Schema, split: SplitSpec,
                  data_path: Path, out_dir: Path) -> dict:
    """Shared train flow for cmd_train and sweep points; returns summary."""
    out_dir.mkdir(parents=True, exist_ok=True)
    full = load_csv(data_path, schema)
    tr, va, te = split_dataset(full, split)
    (tr, va, te), mean, std = standardize(tr, [va, te])

    manifest = {
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "schema": schema.to_dict(),
        "split": split.to_dict(),
        "dataset_sha256": sha256_hex(data_path.read_bytes()),
        "seed": cfg.seed,
        "artifacts": {
            "checkpoint": "checkpoint.json",
            "training_log": "training_log.jsonl",
            "fairness_report": "fairness_report.json",
        },
    }
    manifest_hash = sha256_of_obj(manifest)
    _write_json(out_dir / "manifest.json", manifest)

    model = train(tr, va, cfg)
    save_checkpoint(out_dir / "checkpoint.json", model, schema, mean, std,
                    manifest_sha256=manifest_hash)

    with (out_dir / "training_log.jsonl").open("w", encoding="utf-8") as fh:
        for entry in model.history:
            line = {k: (round_float(v) if isinstance(v, float) else v)
                    for k, v in entry.items()}
            fh.write(json.dumps(line, sort_keys=True) + "\n")

    preds, _ = predict(model, te.x)
    report = fairness_report(preds, te.y, te.s)
    report_doc = {"manifest_sha256": manifest_hash, **report.to_dict()}
    _write_json(out_dir / "fairness_report.json", report_doc)
    log.info("train run complete: %s", out_dir)
    return {
        "accuracy": report.accuracy,
        "demographic_parity": report.dp,
        "equalized_odds": report.eodds,
        "manifest_sha256": manifest_hash,
    }


def cmd_train(args) -> int:
    cfg, schema, split, _ = _resolve_train_config(args)
    _run_training(cfg, schema, split, Path(args.data), Path(args.out))
    return 0


def _load_predictions_csv(path: Path):
    if not path.exists():
        raise DataError(f"missing predictions file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"empty predictions file: {path}")
        need = {"pred", "label", "group"}
        if not need <= set(reader.fieldnames):
            raise DataError(
                f"predictions file needs columns {sorted(need)}, got {reader.fieldnames}"
            )
        has_score = "score" in reader.fieldnames
        preds, labels, groups, scores = [], [], [], []
        for row in reader:
            try:
                preds.append(int(float(row["pred"])))
                labels.append(int(float(row["label"])))
                groups.append(int(float(row["group"])))
                if has_score:
                    scores.append(float(row["score"]))
            except (TypeError, ValueError) as exc:
                raise DataError(f"unparseable predictions row {row!r}") from exc
    if not preds:
        raise DataError(f"predictions file {path} has no rows")
    return (np.array(preds), np.array(labels), np.array(groups),
            np.array(scores) if has_score else None)


def cmd_audit(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = BucketSpec(tuple(args.bucket_thresholds)) if args.bucket_thresholds \
        else BucketSpec()

    dataset: Dataset | None = None
    if args.checkpoint:
        if not args.data:
            raise ConfigError("--checkpoint requires --data")
        loaded = load_checkpoint(args.checkpoint)
        raw = load_csv(Path(args.data), loaded.schema)
        dataset = apply_standardization(raw, loaded.mean, loaded.std)
        preds, prob = predict(loaded.model, dataset.x)
        labels, groups = dataset.y, dataset.s
        conf = np.maximum(prob, 1.0 - prob)
        source = {"checkpoint": str(args.checkpoint), "data": str(args.data),
                  "data_sha256": sha256_hex(Path(args.data).read_bytes())}
    elif args.predictions:
        preds, labels, groups, prob = _load_predictions_csv(Path(args.predictions))
        conf = np.maximum(prob, 1.0 - prob) if prob is not None else None
        source = {"predictions": str(args.predictions),
                  "data_sha256": sha256_hex(Path(args.predictions).read_bytes())}
    else:
        raise ConfigError("audit needs either --predictions or --checkpoint with --data")

    manifest = {"tool_version": __version__, "mode": "audit", "source": source,
                "bucket_thresholds": list(spec.thresholds)}
    manifest_hash = sha256_of_obj(manifest)
    _write_json(out_dir / "audit_manifest.json", manifest)

    report = fairness_report(preds, labels, groups)
    _write_json(out_dir / "fairness_report.json",
                {"manifest_sha256": manifest_hash, **report.to_dict()})

    if conf is not None:
        g_i, g_j = report.pair
        holder = dataset if dataset is not None else Dataset(
            x=np.zeros((len(preds), 1)), y=labels, s=groups,
            schema=_surrogate_schema(),
        )
        bucket = bucket_analysis(holder, preds, conf, spec, g_i, g_j)
        _write_csv(out_dir / "bucket_report.csv", bucket.to_csv_rows())
        _write_json(out_dir / "bucket_report.json",
                    {"manifest_sha256": manifest_hash, **bucket.to_dict()})

    if args.histogram_feature:
        if dataset is None or conf is None:
            raise ConfigError("--histogram-feature requires --checkpoint mode")
        hist = feature_histograms(dataset, conf, spec, args.histogram_feature,
                                  bins=args.bins)
        _write_csv(out_dir / f"histogram_{args.histogram_feature}.csv",
                   hist.to_csv_rows())
        _write_json(out_dir / f"histogram_{args.histogram_feature}.json",
                    {"manifest_sha256": manifest_hash, **hist.to_dict()})
    log.info("audit complete: %s", out_dir)
    return 0


def _surrogate_schema() -> Schema:
    return Schema(columns=(ColumnSpec("f0", "numeric"), ColumnSpec("y", "label"),
                           ColumnSpec("s", "sensitive")))


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(_read_json(args.config, "synth config"))
    d = synth_biased(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    names = [c.name for c in d.schema.feature_columns] + ["y", "s"]
    rows = [names]
    for i in range(d.n):
        rows.append([repr(float(v)) for v in d.x[i]]
                    + [str(int(d.y[i])), str(int(d.s[i]))])
    _write_csv(out, rows)
    sidecar = {
        "synth_config": cfg.to_dict(),
        "clean_labels": d.clean_y.tolist() if d.clean_y is not None else None,
        "csv_sha256": sha256_hex(out.read_bytes()),
    }
    _write_json(out.with_suffix(out.suffix + ".meta.json"), sidecar)
    log.info("synth data written: %s", out)
    return 0


def _sweep_grid(doc: dict) -> list[dict]:
    unknown = set(doc) - set(SWEEPABLE)
    if unknown:
        raise ConfigError(f"unsweepable keys: {sorted(unknown)}; allowed {SWEEPABLE}")
    keys = [k for k in SWEEPABLE if k in doc]
    if not keys:
        raise ConfigError("sweep grid is empty: no sweepable keys present")
    axes = []
    for k in keys:
        vals = doc[k]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"sweep axis {k!r} must be a nonempty list")
        axes.append(vals)
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


def cmd_sweep(args) -> int:
    cfg, schema, split, _ = _resolve_train_config(args)
    grid = _sweep_grid(_read_json(args.sweep, "sweep spec"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["point", *SWEEPABLE, "status", "accuracy", "demographic_parity",
              "equalized_odds", "reason"]
    rows = [header]
    succeeded = 0
    for i, point in enumerate(grid):
        merged = {**cfg.to_dict(), **point}
        run_dir = out_dir / f"point_{i:03d}"
        values = {k: merged[k] for k in SWEEPABLE}
        try:
            point_cfg = TrainConfig.from_dict(merged)
            summary = _run_training(point_cfg, schema, split, Path(args.data), run_dir)
            rows.append([str(i), *(_cell(values[k]) for k in SWEEPABLE), "ok",
                         f"{summary['accuracy']:.12g}",
                         f"{summary['demographic_parity']:.12g}",
                         f"{summary['equalized_odds']:.12g}", ""])
            succeeded += 1
        except ReckonerError as exc:
            log.warning("sweep point %d failed: %s", i, exc)
            rows.append([str(i), *(_cell(values[k]) for k in SWEEPABLE), "error",
                         "", "", "", str(exc)])
    _write_csv(out_dir / "summary.csv", rows)
    if succeeded == 0:
        raise ConfigError("all sweep points failed; see summary.csv")
    return 0


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reckoner",
        description="Confidence-split dual-model fair classification pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and audit the test split")
    p_train.add_argument("--config", required=True, help="train config JSON")
    p_train.add_argument("--data", required=True, help="input CSV")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--no-noise", action="store_true",
                         help="disable the learnable noise wrapper")
    p_train.add_argument("--no-pseudo", action="store_true",
                         help="disable pseudo-learning and knowledge sharing")
    p_train.set_defaults(func=cmd_train)

    p_audit = sub.add_parser("audit", help="fairness and confidence-bucket reports")
    p_audit.add_argument("--predictions", help="CSV with pred,label,group[,score]")
    p_audit.add_argument("--checkpoint", help="checkpoint JSON from a train run")
    p_audit.add_argument("--data", help="CSV to score (checkpoint mode)")
    p_audit.add_argument("--out", required=True, help="output directory")
    p_audit.add_argument("--histogram-feature", default=None,
                         help="numeric feature to histogram per bucket")
    p_audit.add_argument("--bins", type=int, default=10)
    p_audit.add_argument("--bucket-thresholds", type=float, nargs="+", default=None)
    p_audit.set_defaults(func=cmd_audit)

    p_synth = sub.add_parser("synth", help="generate a biased-label synthetic CSV")
    p_synth.add_argument("--config", required=True, help="synth config JSON")
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.set_defaults(func=cmd_synth)

    p_sweep = sub.add_parser("sweep", help="grid sweep over key hyperparameters")
    p_sweep.add_argument("--config", required=True, help="base train config JSON")
    p_sweep.add_argument("--data", required=True, help="input CSV")
    p_sweep.add_argument("--sweep", required=True, help="sweep grid JSON")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--seed", type=int, default=None, help="override config seed")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f'error kind=config exit=1 reason="{exc}"', file=sys.stderr)
        return 1
    except DataError as exc:
        print(f'error kind=data exit=2 reason="{exc}"', file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f'error kind=numeric exit=3 reason="{exc}"', file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
