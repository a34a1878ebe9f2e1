"""Versioned JSON checkpoints.

Parameter values are serialized with Python's shortest-exact float repr, so
a reloaded model reproduces scores bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Schema
from .errors import ConfigError
from .models import (
    FeedForwardClassifier,
    LinearClassifier,
    ModelParams,
    NoiseWrapper,
    ParamLayout,
)
from .pipeline import ReckonerModel, TrainConfig

CHECKPOINT_VERSION = 1


def _params_dict(params: ModelParams) -> dict:
    return {
        "layout": params.layout.to_dict(),
        "values": params.values.tolist(),
    }


def _params_from_dict(d: dict) -> ModelParams:
    layout = ParamLayout.from_dict(d["layout"])
    return ModelParams(layout, np.asarray(d["values"], dtype=np.float64))


def checkpoint_dict(model: ReckonerModel, schema: Schema,
                    mean: np.ndarray, std: np.ndarray,
                    manifest_sha256: str | None = None) -> dict:
    cfg = model.config
    return {
        "format_version": CHECKPOINT_VERSION,
        "kind": "reckoner",
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "m": model.m,
        "models": {
            "high": _params_dict(model.high.params),
            "low": _params_dict(model.low.params),
            "identifier": _params_dict(model.identifier.params),
            "noise": {
                **_params_dict(model.noise.params),
                "eta": model.noise.eta.tolist(),
                "hidden": model.noise.hidden,
            },
        },
        "low_snapshot": model.low_snapshot.values.tolist(),
        "standardize": {"mean": mean.tolist(), "std": std.tolist()},
        "schema": schema.to_dict(),
        "manifest_sha256": manifest_sha256,
    }


def save_checkpoint(path: str | Path, model: ReckonerModel, schema: Schema,
                    mean: np.ndarray, std: np.ndarray,
                    manifest_sha256: str | None = None) -> None:
    doc = checkpoint_dict(model, schema, mean, std, manifest_sha256)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


@dataclass(frozen=True)
class LoadedCheckpoint:
    model: ReckonerModel
    schema: Schema
    mean: np.ndarray
    std: np.ndarray
    manifest_sha256: str | None


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint version {doc.get('format_version')!r}"
        )
    cfg = TrainConfig.from_dict(doc["config"])
    m = int(doc["m"])
    high_params = _params_from_dict(doc["models"]["high"])
    low_params = _params_from_dict(doc["models"]["low"])
    ident_params = _params_from_dict(doc["models"]["identifier"])
    noise_doc = doc["models"]["noise"]
    noise_params = _params_from_dict(noise_doc)

    high = FeedForwardClassifier(m, cfg.hidden1, cfg.hidden2, high_params)
    low = FeedForwardClassifier(m, cfg.hidden1, cfg.hidden2, low_params)
    identifier = LinearClassifier(m, ident_params)
    noise = NoiseWrapper(m, int(noise_doc["hidden"]),
                         np.asarray(noise_doc["eta"], dtype=np.float64),
                         noise_params)
    snapshot = ModelParams(low_params.layout,
                           np.asarray(doc["low_snapshot"], dtype=np.float64))
    model = ReckonerModel(high, low, noise, identifier, cfg, snapshot)
    return LoadedCheckpoint(
        model=model,
        schema=Schema.from_dict(doc["schema"]),
        mean=np.asarray(doc["standardize"]["mean"], dtype=np.float64),
        std=np.asarray(doc["standardize"]["std"], dtype=np.float64),
        manifest_sha256=doc.get("manifest_sha256"),
    )
