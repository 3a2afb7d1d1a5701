import json

import numpy as np
import pytest

from dyson_ode.library import BUILTINS, builtin_spec
from dyson_ode.specfile import SpecError, emit, load, normalize, parse

DRIVEN = """{
  "name": "forced",
  "a0": [[0, 1], [-1, -0.5]],
  "b1": [0, [1, 0.5]],
  "mode": "sin",
  "omega": 1.0,
  "phase": 1.5707963267948966,
  "x0": [1, 0],
  "horizon": 2.0
}"""


@pytest.mark.parametrize("text", [
    DRIVEN,
    '{"a0": [[-1]], "x0": [1], "horizon": 1}',
    '{"a0": [[[0, 1], 0], [0, [0, -1]]], "a1": [[0, 1], [1, 0]], "mode": "linear",'
    ' "x0": [[1, 1], 0], "horizon": 0.5, "lambda_a": 2.5, "x_max": 3}',
])
def test_round_trip_is_canonical(text):
    spec = parse(text)
    assert emit(spec) == normalize(text)
    assert emit(parse(emit(spec))) == emit(spec)


def test_complex_entries():
    spec = parse(DRIVEN)
    assert spec.b1[1] == 1 + 0.5j
    assert spec.b1.dtype == complex
    assert spec.a0.dtype == float
    assert not spec.time_independent


def test_defaults():
    spec = parse('{"a0": [[-1, 0], [0, -2]], "x0": [1, 2], "horizon": 3}')
    assert spec.name == "problem" and spec.mode == "sin"
    assert spec.time_independent
    assert np.array_equal(spec.b0, [0, 0])


@pytest.mark.parametrize("text,line,column", [
    ('{"a0": [[-1]],\n "x0": [1], "horizon": 1,}', 2, 26),
    ('{"a0": [[-1]],\n  "x0": [1, 2], "horizon": 1}', 1, 2),
    ('{"a0": [[-1]], "x0": [1],\n "horizon": -1}', 2, 2),
    ('{"a0": [[-1]], "x0": [1], "horizon": 1,\n   "colour": 3}', 2, 4),
    ('{"a0": [[-1]], "x0": [1], "horizon": 1, "mode": "cos"}', 1, 41),
    ('{"a0": [["x"]], "x0": [1], "horizon": 1}', 1, 2),
])
def test_errors_carry_position(text, line, column):
    with pytest.raises(SpecError) as info:
        parse(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_missing_key():
    with pytest.raises(SpecError, match="horizon"):
        parse('{"a0": [[-1]], "x0": [1]}')


@pytest.mark.parametrize("name", BUILTINS)
def test_builtin_documents(name):
    text = json.dumps({"kind": "builtin", "name": name})
    assert emit(parse(text)) == emit(builtin_spec(name))
    assert normalize(text) == emit(builtin_spec(name))
    assert emit(parse(emit(builtin_spec(name)))) == emit(builtin_spec(name))


def test_unknown_builtin():
    with pytest.raises(SpecError):
        parse('{"kind": "builtin", "name": "nope"}')


def test_load(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(DRIVEN)
    assert emit(load(path)) == normalize(DRIVEN)
