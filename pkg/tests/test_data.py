"""Boundary data specs."""

import math

import numpy as np
import pytest

from pelliptic.data import default_family, make_datum
from pelliptic.errors import ConfigError

X = np.linspace(0, 1, 9, endpoint=False)[:, None]


@pytest.mark.parametrize("spec,want", [
    (2.0, lambda x: np.full(x.shape[0], 2.0)),
    ([1, 2], lambda x: np.full(x.shape[0], 1 + 2j)),
    ({"kind": "zero"}, lambda x: np.zeros(x.shape[0])),
    ({"kind": "fourier", "modes": [2]}, lambda x: np.exp(4j * math.pi * x[:, 0])),
    ({"kind": "cosine", "amplitude": 0.5}, lambda x: 0.5 * np.cos(2 * math.pi * x[:, 0])),
    ({"kind": "formula", "expr": "x1**2 + j"}, lambda x: x[:, 0] ** 2 + 1j),
    ({"kind": "sum", "terms": [1.0, {"kind": "cosine", "amplitude": 0.05}]},
     lambda x: 1 + 0.05 * np.cos(2 * math.pi * x[:, 0])),
])
def test_values(spec, want):
    np.testing.assert_allclose(make_datum(spec)(X), want(X), atol=1e-14)


def test_bump_is_periodic_and_compact():
    d = make_datum({"kind": "bump", "center": [0.0], "width": 0.2})
    v = d(np.array([[0.0], [0.1], [0.9], [0.5]]))
    assert v[0] == 1.0
    assert v[1] == pytest.approx(v[2])
    assert v[3] == 0.0


def test_step_records_jumps():
    d = make_datum({"kind": "step", "threshold": 0.3, "left": 2.0, "right": -1.0})
    assert d.jumps == [0.0, 0.3]
    np.testing.assert_allclose(d(np.array([[0.1], [0.5]])), [2.0, -1.0])
    s = make_datum({"kind": "sum", "terms": [1.0, {"kind": "step"}]})
    assert s.jumps == [0.0, 0.5]


def test_period_scales_modes():
    d = make_datum({"kind": "fourier"}, period=2.0)
    assert d(np.array([[1.0]]))[0] == pytest.approx(-1.0)


def test_default_family_names():
    assert [d["name"] for d in default_family()] == ["constant", "fourier1", "fourier2", "bump"]


@pytest.mark.parametrize("spec", [{"kind": "nope"}, "text", {"kind": "formula", "expr": "__import__('os')"}])
def test_bad_specs(spec):
    with pytest.raises(ConfigError):
        make_datum(spec)(X)
