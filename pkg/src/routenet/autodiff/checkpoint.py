"""Parameter checkpoints.

Format (UTF-8 JSON, one document)::

    {"format": "routenet-checkpoint", "version": 1,
     "meta": {...free-form metadata...},
     "params": {"<name>": {"shape": [..], "values": [.. row-major floats ..]}, ...}}

Floats are written with ``repr`` precision so a load/save cycle is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "routenet-checkpoint"
VERSION = 1


def dumps(params: dict[str, np.ndarray], meta: dict | None = None) -> str:
    body = {
        "format": FORMAT,
        "version": VERSION,
        "meta": meta or {},
        "params": {k: {"shape": list(np.shape(v)), "values": np.asarray(v, float).ravel().tolist()}
                   for k, v in sorted(params.items())},
    }
    return json.dumps(body, sort_keys=True)


def loads(text: str) -> tuple[dict[str, np.ndarray], dict]:
    body = json.loads(text)
    if body.get("format") != FORMAT:
        raise ValueError("not a routenet checkpoint")
    if body.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {body.get('version')}")
    params = {k: np.array(v["values"], dtype=float).reshape(v["shape"]) for k, v in body["params"].items()}
    return params, body.get("meta", {})


def save(path, params: dict[str, np.ndarray], meta: dict | None = None):
    Path(path).write_text(dumps(params, meta), encoding="utf-8")


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_text(encoding="utf-8"))
