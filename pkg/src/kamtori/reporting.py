"""Deterministic result emission: stable JSON, headered CSV, config hashing.

Identical configs (including seeds) must reproduce outputs byte for byte, so
floats are rendered with a fixed 17-significant-digit format, keys are written
in sorted order, and every file carries the hash of the canonicalized config.
"""

from __future__ import annotations

import hashlib
import math
import os

import numpy as np

from .errors import KamtoriError


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        # JSON has no literals for these; encode as strings
        return f'"{x}"'
    return format(x, ".17g")


def stable_dumps(obj, indent: int = 0) -> str:
    """Deterministic JSON text: sorted keys, fixed float formatting."""
    pad = " " * indent
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (np.floating,)):
        return _fmt_float(float(obj))
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{out}"'
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        items = [stable_dumps(v, indent + 2) for v in obj]
        if not items:
            return "[]"
        inner = ",\n".join(" " * (indent + 2) + it for it in items)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        items = []
        for key in sorted(obj, key=str):
            items.append(" " * (indent + 2) + f'"{key}": '
                         + stable_dumps(obj[key], indent + 2))
        if not items:
            return "{}"
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise KamtoriError(f"cannot serialize {type(obj).__name__}")


def config_hash(document: dict) -> str:
    return hashlib.sha256(stable_dumps(document).encode("utf-8")).hexdigest()


def write_json(path: str, payload: dict, cfg_hash: str) -> str:
    body = dict(payload)
    body["config_sha256"] = cfg_hash
    text = stable_dumps(body) + "\n"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_csv(path: str, header: list, rows, cfg_hash: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_sha256={cfg_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, (float, np.floating)):
                    cells.append(format(float(cell), ".17g"))
                else:
                    cells.append(str(cell))
            fh.write(",".join(cells) + "\n")
    return path
