"""Versioned JSON documents for fitted models.

Floats are written with Python's shortest round-trip repr (the ``json``
default), so every real survives a save/load cycle bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_REGISTRY: dict[str, type] = {}


def register(model_type: str):
    def deco(cls):
        cls.model_type = model_type
        _REGISTRY[model_type] = cls
        return cls
    return deco


def encode(value):
    if isinstance(value, np.ndarray):
        if value.dtype.kind in "iub":
            return {"__array__": value.tolist(), "dtype": "int", "shape": list(value.shape)}
        return {"__array__": value.astype(float).ravel().tolist(), "dtype": "float", "shape": list(value.shape)}
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [encode(v) for v in value]
    return value


def decode(value):
    if isinstance(value, dict):
        if "__array__" in value:
            if value["dtype"] == "int":
                return np.array(value["__array__"], dtype=np.int64).reshape(value["shape"])
            return np.array(value["__array__"], dtype=float).reshape(value["shape"])
        return {k: decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [decode(v) for v in value]
    return value


def to_document(model, feature_names=()) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_type": model.model_type,
        "feature_names": list(feature_names),
        "parameters": encode(model.to_params()),
    }


def from_document(doc: dict):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    cls = _REGISTRY.get(doc["model_type"])
    if cls is None:
        raise ValueError(f"unknown model type {doc['model_type']!r}")
    return cls.from_params(decode(doc["parameters"])), list(doc.get("feature_names", []))


def dumps(model, feature_names=()) -> str:
    return json.dumps(to_document(model, feature_names), sort_keys=True, allow_nan=False)


def loads(text: str):
    return from_document(json.loads(text))


def save_model(model, path, feature_names=()) -> None:
    Path(path).write_text(dumps(model, feature_names) + "\n", encoding="utf-8")


def load_model(path):
    return loads(Path(path).read_text(encoding="utf-8"))
