import csv
import io
import json
import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from wgtomo.records import csv_text, fmt, json_text

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(finite)
def test_csv_float_roundtrip_is_exact(x):
    assert float(fmt(x)) == x


@given(st.lists(finite, min_size=1, max_size=8))
def test_json_float_roundtrip_is_exact(xs):
    back = json.loads(json_text({"xs": xs, "x": xs[0]}))
    assert back["xs"] == xs and back["x"] == xs[0]


def test_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert json_text(0.1).strip() == "0.10000000000000001"


def test_special_values():
    assert fmt(True) == "true" and fmt(np.int64(3)) == "3" and fmt(None) == ""
    assert fmt(float("nan")) == "nan" and fmt(-math.inf) == "-inf"
    assert json.loads(json_text({"a": float("nan")})) == {"a": None}
    assert json.loads(json_text(1 + 2j)) == {"re": 1.0, "im": 2.0}


def test_csv_layout():
    text = csv_text(["a", "b"], [{"a": 1, "b": 0.5}, (2, "x,y")])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows == [["a", "b"], ["1", "0.5"], ["2", "x,y"]]


def test_json_is_deterministic():
    obj = {"b": [1.0, {"c": np.float64(2.5)}], "a": np.arange(3)}
    assert json_text(obj) == json_text(obj)
    assert json.loads(json_text(obj)) == {"b": [1.0, {"c": 2.5}], "a": [0, 1, 2]}
