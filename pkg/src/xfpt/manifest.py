"""JSON run manifests: inputs, their hash, seed and output inventory."""
from __future__ import annotations

import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    return o


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def input_hash(obj) -> str:
    """sha256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def build_manifest(command: str, inputs: dict, outputs=(), **extra) -> dict:
    return {
        "command": command,
        "inputs": _plain(inputs),
        "input_hash": input_hash(inputs),
        "outputs": [str(p) for p in outputs],
        "backend": BACKEND,
        "version": __version__,
        "python": platform.python_version(),
        **_plain(extra),
    }


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n")
    return path
