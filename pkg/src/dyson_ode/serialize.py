"""Deterministic JSON emission and complex-array <-> [re, im] pair conversion."""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

SCHEMA_VERSION = "dyson-ode/1"


def to_pairs(array) -> Any:
    """Nested lists mirroring ``array`` with each entry as ``[re, im]``."""
    array = np.asarray(array)
    if array.ndim == 0:
        z = complex(array)
        return [z.real, z.imag]
    return [to_pairs(item) for item in array]


def from_pairs(data) -> np.ndarray:
    """Inverse of :func:`to_pairs`; plain real numbers are also accepted as entries.

    Returns a float array when every imaginary part is zero.
    """
    def convert(item):
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            return complex(item)
        if (isinstance(item, list) and len(item) == 2
                and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in item)):
            return complex(item[0], item[1])
        if isinstance(item, list):
            return [convert(x) for x in item]
        raise ValueError(f"expected a number or [re, im] pair, got {item!r}")

    if isinstance(data, list) and not data:
        return np.zeros(0)
    array = np.array(convert(data), dtype=complex)
    if not np.any(array.imag):
        return array.real.copy()
    return array


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = "%.17g" % x
    return text if any(c in text for c in ".eEn") else text + ".0"


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and floats at 17 significant digits."""
    def emit(item, level):
        pad = " " * (indent * (level + 1))
        close = " " * (indent * level)
        if isinstance(item, dict):
            if not item:
                return "{}"
            parts = [f"{pad}{json.dumps(str(k))}: {emit(v, level + 1)}" for k, v in item.items()]
            return "{\n" + ",\n".join(parts) + "\n" + close + "}"
        if isinstance(item, (list, tuple)):
            if not item:
                return "[]"
            if all(not isinstance(x, (dict, list, tuple)) for x in item):
                return "[" + ", ".join(emit(x, level + 1) for x in item) + "]"
            parts = [pad + emit(x, level + 1) for x in item]
            return "[\n" + ",\n".join(parts) + "\n" + close + "]"
        if isinstance(item, np.ndarray):
            return emit(item.tolist(), level)
        if item is None or isinstance(item, (bool, np.bool_)):
            return "null" if item is None else ("true" if item else "false")
        if isinstance(item, (int, np.integer)):
            return str(int(item))
        if isinstance(item, (float, np.floating)):
            return _format_float(float(item))
        if isinstance(item, (complex, np.complexfloating)):
            return emit([item.real, item.imag], level)
        if isinstance(item, str):
            return json.dumps(item)
        raise TypeError(f"cannot serialize {type(item).__name__}")

    return emit(obj, 0) + "\n"
