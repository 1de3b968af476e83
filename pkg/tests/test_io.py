"""Matrix parsing, deterministic JSON and the binary grid format."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pelliptic.io import boundary_csv, dump_json, jsonable, matrix_to_json, parse_matrix, read_grid, write_grid


@pytest.mark.parametrize("obj,want", [
    ([[1, 0], [0, 1]], np.eye(2)),
    ([[[1, 1], 0], [0, [1, -1]]], np.diag([1 + 1j, 1 - 1j])),
    ([1, 2, 3, 4], np.array([[1, 2], [3, 4]])),
    ('[[2, 0], [0, 3]]', np.diag([2, 3])),
    ({"matrix": [[1]]}, np.eye(1)),
])
def test_parse_matrix(obj, want):
    np.testing.assert_array_equal(parse_matrix(obj), want)


@pytest.mark.parametrize("obj", [[], [1, 2, 3], [["a", 0], [0, 1]], [[1, 2, 3], [1, 2]], 5])
def test_parse_matrix_rejects(obj):
    with pytest.raises(ValueError):
        parse_matrix(obj)


def test_matrix_json_round_trip():
    A = np.array([[1 + 2j, -0.5], [3j, 4]])
    np.testing.assert_array_equal(parse_matrix(matrix_to_json(A)), A)


def test_jsonable_special_values():
    assert jsonable({"a": math.inf, "b": np.float64("nan"), "c": 1 + 2j, 3: np.arange(2)}) == \
        {"a": "inf", "b": "nan", "c": [1.0, 2.0], "3": [0, 1]}


def test_dump_json_is_deterministic(tmp_path):
    a = dump_json({"b": 1, "a": [1.5, np.float32(2)]}, tmp_path / "x.json")
    b = dump_json({"a": [1.5, 2.0], "b": 1})
    assert a == b
    assert json.loads((tmp_path / "x.json").read_text()) == {"a": [1.5, 2.0], "b": 1}


@settings(max_examples=25, deadline=None)
@given(values=hnp.arrays(np.complex128, hnp.array_shapes(min_dims=1, max_dims=3, max_side=5),
                         elements=st.complex_numbers(allow_nan=False, allow_infinity=False, max_magnitude=1e6)))
def test_grid_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("g") / "u.grid"
    write_grid(path, values, [0.5, 0.25])
    got, meshes, n = read_grid(path)
    np.testing.assert_array_equal(got, values)
    assert meshes == [0.5, 0.25] and n == values.ndim


def test_grid_rejects_other_files(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"hello world")
    with pytest.raises(ValueError):
        read_grid(p)


def test_boundary_csv():
    text = boundary_csv(np.array([[0.0], [0.5]]), np.array([1.0, 2.0]))
    assert text.splitlines() == ["x1,value", "0,1", "0.5,2"]
