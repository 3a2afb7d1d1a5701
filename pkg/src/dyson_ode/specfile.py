"""Problem spec files: JSON documents with complex entries as ``[re, im]`` pairs.

A matrix-polynomial spec reads::

    {
      "name": "driven-oscillator",
      "kind": "matrix-polynomial",
      "a0": [[0, 1], [-1, -0.5]],
      "b1": [0, 1],
      "mode": "sin", "omega": 1.0, "phase": 1.5707963267948966,
      "x0": [1, 0],
      "horizon": 2.0
    }

giving ``A(t) = a0 + a1 g(t)`` and ``b(t) = b0 + b1 g(t)`` with
``g(t) = sin(omega t + phase)`` (mode ``sin``) or ``g(t) = t`` (mode ``linear``).
Any entry may be a real number or an ``[re, im]`` pair. A builtin spec is
``{"kind": "builtin", "name": "heat8"}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import MatrixFunction, OdeProblem, VectorFunction
from .serialize import dumps

KINDS = ("builtin", "matrix-polynomial")
MODES = ("sin", "linear")
_OPTIONAL = ("lambda_a", "lambda_b", "x_max", "a_prime_max", "b_prime_max")
_KEYS = ("name", "kind", "a0", "a1", "b0", "b1", "mode", "omega", "phase", "x0",
         "horizon") + _OPTIONAL


class SpecError(ValueError):
    """Malformed spec; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    kind: str
    a0: np.ndarray
    a1: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    mode: str
    omega: float
    phase: float
    x0: np.ndarray
    horizon: float
    lambda_a: Optional[float] = None
    lambda_b: Optional[float] = None
    x_max: Optional[float] = None
    a_prime_max: Optional[float] = None
    b_prime_max: Optional[float] = None

    @property
    def dimension(self) -> int:
        return len(self.x0)

    @property
    def time_independent(self) -> bool:
        return not np.any(self.a1) and not np.any(self.b1)

    def to_problem(self) -> OdeProblem:
        a = MatrixFunction.polynomial(self.a0, self.a1, self.mode, self.omega, self.phase)
        b = VectorFunction.polynomial(self.b0, self.b1, self.mode, self.omega, self.phase)
        if self.a_prime_max is not None:
            a = MatrixFunction(a.dimension, a.evaluate, self.a_prime_max, a.is_constant, a.batch)
        if self.b_prime_max is not None:
            b = VectorFunction(b.dimension, b.evaluate, self.b_prime_max, b.is_constant, b.batch)
        return OdeProblem.create(a, b, self.x0, self.horizon, self.lambda_a, self.lambda_b,
                                 self.x_max, self.name)

    def to_dict(self) -> dict:
        """Canonical document: fixed key order, every entry as an ``[re, im]`` pair."""
        out = {
            "name": self.name,
            "kind": "matrix-polynomial",
            "a0": _pairs(self.a0),
            "a1": _pairs(self.a1),
            "b0": _pairs(self.b0),
            "b1": _pairs(self.b1),
            "mode": self.mode,
            "omega": float(self.omega),
            "phase": float(self.phase),
            "x0": _pairs(self.x0),
            "horizon": float(self.horizon),
        }
        for key in _OPTIONAL:
            value = getattr(self, key)
            if value is not None:
                out[key] = float(value)
        return out


def _pairs(array: np.ndarray):
    if array.ndim == 0:
        z = complex(array)
        return [float(z.real), float(z.imag)]
    return [_pairs(item) for item in array]


def _locate(text: str, key: str) -> tuple[Optional[int], Optional[int]]:
    index = text.find(json.dumps(key))
    if index < 0:
        return None, None
    line = text.count("\n", 0, index) + 1
    return line, index - (text.rfind("\n", 0, index) + 1) + 1


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _entry(x) -> complex:
    if _is_number(x):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(_is_number(p) for p in x):
        return complex(x[0], x[1])
    raise ValueError(f"entry {x!r} is neither a number nor an [re, im] pair")


def _array(value, ndim: int) -> np.ndarray:
    if ndim == 1:
        if not isinstance(value, list) or not value:
            raise ValueError("expected a non-empty list of entries")
        array = np.array([_entry(x) for x in value], dtype=complex)
    else:
        if not isinstance(value, list) or not value:
            raise ValueError("expected a non-empty list of rows")
        rows = [_array(row, 1) for row in value]
        if len({len(row) for row in rows}) != 1:
            raise ValueError("rows have different lengths")
        array = np.array(rows)
    if not np.all(np.isfinite(array)):
        raise ValueError("non-finite entry")
    return array.real.copy() if not np.any(array.imag) else array


def _real(value, key: str) -> float:
    if not _is_number(value) or not math.isfinite(value):
        raise ValueError(f"{key} must be a finite number")
    return float(value)


def parse_dict(data: dict, text: str = "") -> ProblemSpec:
    """Validate a decoded spec document. ``text`` is only used to locate errors."""
    from .library import builtin_spec

    def fail(key, message):
        line, column = _locate(text, key) if key else (None, None)
        raise SpecError(message, line, column)

    if not isinstance(data, dict):
        raise SpecError("top level must be an object", 1, 1)
    for key in data:
        if key not in _KEYS:
            fail(key, f"unknown key {key!r}")
    kind = data.get("kind", "matrix-polynomial")
    if kind not in KINDS:
        fail("kind", f"kind must be one of {', '.join(KINDS)}")
    if kind == "builtin":
        try:
            return builtin_spec(data.get("name"))
        except KeyError as exc:
            fail("name", str(exc.args[0]))
    for key in ("a0", "x0", "horizon"):
        if key not in data:
            fail(None, f"missing required key {key!r}")

    def get(key, ndim):
        try:
            return _array(data[key], ndim)
        except ValueError as exc:
            fail(key, f"{key}: {exc}")

    x0 = get("x0", 1)
    n = len(x0)
    a0 = get("a0", 2)
    if a0.shape != (n, n):
        fail("a0", f"a0 has shape {a0.shape}, expected ({n}, {n}) to match x0")
    a1 = get("a1", 2) if "a1" in data else np.zeros((n, n))
    if a1.shape != (n, n):
        fail("a1", f"a1 has shape {a1.shape}, expected ({n}, {n})")
    b0 = get("b0", 1) if "b0" in data else np.zeros(n)
    b1 = get("b1", 1) if "b1" in data else np.zeros(n)
    for key, vec in (("b0", b0), ("b1", b1)):
        if vec.shape != (n,):
            fail(key, f"{key} has length {len(vec)}, expected {n}")
    mode = data.get("mode", "sin")
    if mode not in MODES:
        fail("mode", f"mode must be one of {', '.join(MODES)}")
    values = {}
    for key, default in (("omega", 1.0), ("phase", 0.0), ("horizon", None)):
        try:
            values[key] = _real(data.get(key, default), key)
        except ValueError as exc:
            fail(key, str(exc))
    if values["horizon"] <= 0:
        fail("horizon", "horizon must be positive")
    optional = {}
    for key in _OPTIONAL:
        if key in data:
            try:
                optional[key] = _real(data[key], key)
            except ValueError as exc:
                fail(key, str(exc))
            if optional[key] < 0:
                fail(key, f"{key} must be nonnegative")
    name = data.get("name", "problem")
    if not isinstance(name, str):
        fail("name", "name must be a string")
    return ProblemSpec(name, "matrix-polynomial", a0, a1, b0, b1, mode, values["omega"],
                       values["phase"], x0, values["horizon"], **optional)


def parse(text: str) -> ProblemSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(exc.msg, exc.lineno, exc.colno) from None
    return parse_dict(data, text)


def load(path) -> ProblemSpec:
    with open(path, encoding="utf-8") as handle:
        return parse(handle.read())


def emit(spec: ProblemSpec) -> str:
    return dumps(spec.to_dict())


def normalize(text: str) -> str:
    """Canonical text of a spec document, computed on the raw JSON tree."""
    data = json.loads(text)
    if data.get("kind") == "builtin":
        from .library import builtin_spec
        return emit(builtin_spec(data["name"]))

    def pair_tree(value, depth):
        if depth == 0:
            z = _entry(value)
            return [z.real, z.imag]
        return [pair_tree(v, depth - 1) for v in value]

    n = len(data["x0"])
    zero_matrix = [[0.0] * n for _ in range(n)]
    out = {"name": data.get("name", "problem"), "kind": "matrix-polynomial"}
    for key, depth, default in (("a0", 2, None), ("a1", 2, zero_matrix),
                                ("b0", 1, [0.0] * n), ("b1", 1, [0.0] * n)):
        out[key] = pair_tree(data.get(key, default), depth)
    out["mode"] = data.get("mode", "sin")
    out["omega"] = float(data.get("omega", 1.0))
    out["phase"] = float(data.get("phase", 0.0))
    out["x0"] = pair_tree(data["x0"], 1)
    out["horizon"] = float(data["horizon"])
    for key in _OPTIONAL:
        if key in data:
            out[key] = float(data[key])
    return dumps(out)
