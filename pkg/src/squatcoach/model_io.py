"""Versioned model container: JSON with base64-packed parameter arrays.

Layout (documented in docs/FORMATS.md): a single UTF-8 JSON document with
``format: "squatcoach-model"``, a major ``schema_version``, the model
identity (id, architecture, classes, channel list, seed, training config,
validation summary), and the parameter blob. Neural parameters serialize
as little-endian float64 raw bytes in base64 with explicit shapes; forest
trees serialize as plain JSON arrays. Load then save reproduces the file
byte for byte.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import FormatError
from .forest import RandomForest
from .nets import Cnn1d, LstmNet
from .training import LSTM_DROPOUT, MODEL_SPECS, TrainConfig, TrainedModel

FORMAT_NAME = "squatcoach-model"
SCHEMA_VERSION = 1


def _pack_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _unpack_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).copy()


def model_to_dict(model: TrainedModel) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "schema_version": model.schema_version,
        "model_id": model.model_id,
        "arch": model.arch,
        "n_classes": model.n_classes,
        "channels": list(model.channels),
        "train_seed": model.train_seed,
        "config": asdict(model.config),
        "best_epoch": model.best_epoch,
        "val_macro_f1": model.val_macro_f1,
    }
    if model.arch == "forest":
        doc["forest"] = model.net.to_dict()
    else:
        doc["params"] = {k: _pack_array(v) for k, v in model.net.params.items()}
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != FORMAT_NAME:
        raise FormatError(f"not a {FORMAT_NAME} document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported model schema {doc.get('schema_version')!r}; "
                          f"this build reads version {SCHEMA_VERSION}")
    config = doc["config"]
    config["cnn_filters"] = tuple(config["cnn_filters"])
    config = TrainConfig(**config)
    model_id = doc["model_id"]
    arch = doc["arch"]
    n_classes = doc["n_classes"]
    channels = tuple(doc["channels"])
    seed = doc["train_seed"]
    if model_id not in MODEL_SPECS:
        raise FormatError(f"unknown model id {model_id!r}")

    if arch == "forest":
        net = RandomForest.from_dict(doc["forest"])
    elif arch == "cnn1d":
        net = Cnn1d(len(channels), n_classes, seed=0,
                    filters1=config.cnn_filters[0], filters2=config.cnn_filters[1],
                    dense_units=config.cnn_dense)
        net.params = {k: _unpack_array(v) for k, v in doc["params"].items()}
    elif arch == "lstm":
        net = LstmNet(len(channels), n_classes, seed=0, units=config.lstm_units,
                      dropout=LSTM_DROPOUT[model_id])
        net.params = {k: _unpack_array(v) for k, v in doc["params"].items()}
    else:
        raise FormatError(f"unknown architecture {arch!r}")

    return TrainedModel(model_id, arch, n_classes, channels, net, seed, config,
                        best_epoch=doc["best_epoch"], val_macro_f1=doc["val_macro_f1"],
                        schema_version=doc["schema_version"])


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True))
    return path


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise FormatError(f"cannot read model file {path}: {err}") from err
    return model_from_dict(doc)
