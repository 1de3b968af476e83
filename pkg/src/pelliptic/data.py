"""Boundary data f(x') built from small JSON specs.

Every datum is a callable of lateral points (..., n-1) returning complex
values.  Kinds: constant, fourier, cosine, bump, step, formula, sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import SAFE_NAMES, _compile
from .errors import ConfigError


@dataclass
class Datum:
    """Boundary datum with its spec and the lateral points where it jumps."""

    func: Callable[[np.ndarray], np.ndarray]
    spec: dict
    jumps: list = field(default_factory=list)
    name: str = ""

    def __call__(self, lateral: np.ndarray) -> np.ndarray:
        lateral = np.asarray(lateral, dtype=float)
        return np.broadcast_to(np.asarray(self.func(lateral), dtype=complex), lateral.shape[:-1]).copy()


def _number(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _periodic_offset(x: np.ndarray, c: float, period: float) -> np.ndarray:
    d = (x - c) % period
    return np.minimum(d, period - d)


def make_datum(spec, period: float = 1.0) -> Datum:
    """Datum from a spec; numbers are shorthand for constants."""
    if isinstance(spec, (int, float)) or (isinstance(spec, list) and len(spec) == 2):
        spec = {"kind": "constant", "value": spec}
    if not isinstance(spec, dict):
        raise ConfigError(f"cannot read datum {spec!r}")
    kind = spec.get("kind")
    name = spec.get("name", kind or "")
    amp = _number(spec.get("amplitude", 1.0))
    if kind == "constant":
        c = _number(spec.get("value", 1.0))
        return Datum(lambda x: np.full(x.shape[:-1], c), spec, name=name)
    if kind == "zero":
        return Datum(lambda x: np.zeros(x.shape[:-1]), spec, name=name)
    if kind in ("fourier", "cosine"):
        modes = np.atleast_1d(np.asarray(spec.get("modes", [1]), dtype=float))

        def phase(x):
            k = np.zeros(x.shape[-1])
            k[: min(modes.size, k.size)] = modes[: k.size]
            return 2 * math.pi * np.tensordot(x, k, axes=([-1], [0])) / period

        if kind == "fourier":
            return Datum(lambda x: amp * np.exp(1j * phase(x)), spec, name=name)
        return Datum(lambda x: amp * np.cos(phase(x)), spec, name=name)
    if kind == "bump":
        center = np.atleast_1d(np.asarray(spec.get("center", [period / 2]), dtype=float))
        width = float(spec.get("width", 0.25 * period))

        def bump(x):
            d2 = sum(_periodic_offset(x[..., i], center[min(i, center.size - 1)], period) ** 2
                     for i in range(x.shape[-1]))
            return amp * np.maximum(0.0, 1.0 - d2 / width**2) ** 2
        return Datum(bump, spec, name=name)
    if kind == "step":
        t = float(spec.get("threshold", period / 2))
        axis = int(spec.get("axis", 0))
        lo, hi = _number(spec.get("left", 1.0)), _number(spec.get("right", 0.0))
        return Datum(lambda x: np.where(x[..., axis] % period < t, lo, hi), spec, jumps=[0.0, t], name=name)
    if kind == "formula":
        code = _compile(spec["expr"])

        def formula(x):
            env = dict(SAFE_NAMES)
            env["x0"] = np.zeros(x.shape[:-1])
            for i in range(x.shape[-1]):
                env[f"x{i + 1}"] = x[..., i]
            env["delta"] = env["x0"]
            env["j"] = 1j
            return code(env)
        return Datum(formula, spec, name=name)
    if kind == "sum":
        parts = [make_datum(s, period) for s in spec["terms"]]
        jumps = sorted({j for p in parts for j in p.jumps})
        return Datum(lambda x: sum(p(x) for p in parts), spec, jumps=jumps, name=name)
    raise ConfigError(f"unknown datum kind {kind!r}")


def default_family(period: float = 1.0) -> list[dict]:
    """Constants, two lateral Fourier modes and a localized bump."""
    return [
        {"kind": "constant", "value": 1.0, "name": "constant"},
        {"kind": "fourier", "modes": [1], "name": "fourier1"},
        {"kind": "fourier", "modes": [2], "name": "fourier2"},
        {"kind": "bump", "center": [0.5 * period], "width": 0.15 * period, "name": "bump"},
    ]
