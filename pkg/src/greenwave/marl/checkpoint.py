"""Checkpoint files: a versioned JSON tensor dump with a shape header.

Layout::

    {"format": "greenwave-checkpoint", "version": 1,
     "meta": {...training setup...},
     "policy": {"layers": [{"W": {"shape": [i, o], "data": [...]},
                            "b": {"shape": [o], "data": [...]}}, ...]},
     "critic": {...same...}}

Floats are written with ``repr`` precision, so a load/save round trip is
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DimensionError
from .mlp import MLP

FORMAT = "greenwave-checkpoint"
VERSION = 1


def _tensor(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _array(obj: dict, where: str) -> np.ndarray:
    shape = tuple(obj["shape"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != int(np.prod(shape)):
        raise DimensionError(f"{where}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape)


def net_to_dict(net: MLP) -> dict:
    return {"layers": [{"W": _tensor(w), "b": _tensor(b)}
                       for w, b in zip(net.weights, net.biases)]}


def net_from_dict(data: dict, where: str = "net") -> MLP:
    weights, biases = [], []
    for k, layer in enumerate(data["layers"]):
        w = _array(layer["W"], f"{where}.layers[{k}].W")
        b = _array(layer["b"], f"{where}.layers[{k}].b")
        if b.shape != (w.shape[1],) or (weights and weights[-1].shape[1] != w.shape[0]):
            raise DimensionError(f"{where}.layers[{k}]: inconsistent shapes")
        weights.append(w)
        biases.append(b)
    return MLP(weights, biases)


def dumps_checkpoint(policy: MLP, critic: MLP | None, meta: dict) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "meta": meta,
        "policy": net_to_dict(policy),
        "critic": net_to_dict(critic) if critic is not None else None,
    }
    return json.dumps(doc, indent=1) + "\n"


def save_checkpoint(path, policy: MLP, critic: MLP | None, meta: dict) -> None:
    Path(path).write_text(dumps_checkpoint(policy, critic, meta))


def load_checkpoint(path) -> tuple[MLP, MLP | None, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ConfigError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    policy = net_from_dict(doc["policy"], "policy")
    critic = net_from_dict(doc["critic"], "critic") if doc.get("critic") else None
    return policy, critic, doc.get("meta", {})
