"""Deterministic JSON rendering: floats use the shortest exact round-trip form."""

from __future__ import annotations

import json
import math

import numpy as np


def _render(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," + pad if indent else ", "
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        obj = int(obj)
    if isinstance(obj, (np.bool_,)):
        obj = bool(obj)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return repr(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (f"{json.dumps(str(k))}: {_render(v, indent, level + 1)}" for k, v in obj.items())
        return "{" + pad + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        if not seq:
            return "[]"
        # numeric rows stay on one line to keep matrices readable
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_render(v, 0, 0) for v in seq) + "]"
        return "[" + pad + sep.join(_render(v, indent, level + 1) for v in seq) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _render(obj, indent, 0) + "\n"


def dump(obj, path, indent: int = 2) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj, indent))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
