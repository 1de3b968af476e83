"""Experiment configuration: schema validation, presets and the domain/field builders."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .coefficients import SAFE_NAMES, CoefficientField, _compile, make_field
from .data import Datum, default_family, make_datum
from .errors import ConfigError
from .geometry import GraphDomain, StripDomain, build_strip

DEFAULTS = {
    "domain": {"n": 2, "h": 1.0, "period": 1.0},
    "exponents": {"p": [2.0], "q": [2.0]},
    "apertures": {"a": 1.0, "b": 2.0},
    "meshes": [1 / 16, 1 / 32, 1 / 64],
    "seed": 0,
    "output": "out",
    "checks": {},
}


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("pelliptic").joinpath("schema.json").read_text())


def preset_names() -> list[str]:
    root = resources.files("pelliptic").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("pelliptic").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def validate(config: dict) -> dict:
    """Schema check plus the invariants the schema cannot express."""
    try:
        jsonschema.validate(config, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    meshes = config.get("meshes")
    if meshes is not None and any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise ConfigError("meshes must be strictly decreasing")
    ap = config.get("apertures", {})
    if "a" in ap and "b" in ap and not ap["a"] < ap["b"]:
        raise ConfigError("apertures need a < b")
    return config


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(source) -> dict:
    """Config from a dict, a JSON file path, inline JSON text or a preset name."""
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        path = Path(text)
        if path.is_file():
            try:
                raw = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from None
        elif text.lstrip().startswith("{"):
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON ({exc.msg})") from None
        else:
            raw = load_preset(text)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    validate(raw)
    return _merge(DEFAULTS, raw)


def parse_mesh_levels(text: str) -> list[float]:
    """'32,64,128' or '1/32,1/64' or '0.03125' -> mesh sizes."""
    out = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "/" in tok:
            a, b = tok.split("/")
            out.append(float(a) / float(b))
        else:
            v = float(tok)
            out.append(1.0 / v if v >= 1 else v)
    if not out:
        raise ConfigError("empty mesh list")
    return out


@dataclass
class ExperimentConfig:
    """Validated config with builders for strips, fields and data."""

    raw: dict

    @classmethod
    def load(cls, source, **overrides) -> "ExperimentConfig":
        cfg = load_config(source)
        for k, v in overrides.items():
            if v is not None:
                cfg[k] = v
        validate({k: v for k, v in cfg.items() if k in schema()["properties"]})
        return cls(cfg)

    @property
    def n(self) -> int:
        return int(self.raw["domain"].get("n", 2))

    @property
    def h(self) -> float:
        return float(self.raw["domain"].get("h", 1.0))

    @property
    def period(self) -> float:
        return float(self.raw["domain"].get("period", 1.0))

    @property
    def meshes(self) -> list[float]:
        return [float(m) for m in self.raw["meshes"]]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def exponents(self) -> dict:
        return self.raw["exponents"]

    @property
    def apertures(self) -> dict:
        return self.raw["apertures"]

    @property
    def field_spec(self) -> dict:
        return self.raw["field"]

    def check_options(self, cid: str) -> dict:
        return dict(self.raw.get("checks", {}).get(cid, {}))

    def strip(self, mesh, h: float | None = None) -> StripDomain:
        lat = self.raw["domain"].get("lateral_mesh")
        meshes = mesh if isinstance(mesh, (list, tuple)) else ((mesh, lat) if lat else mesh)
        return build_strip(self.n, self.h if h is None else h, meshes, self.period)

    def field(self, mesh, h: float | None = None) -> CoefficientField:
        return make_field(self.strip(mesh, h), self.field_spec)

    def data(self, specs=None) -> list[Datum]:
        specs = specs if specs is not None else self.raw.get("data") or default_family(self.period)
        return [make_datum(s, self.period) for s in specs]

    def graph(self, mesh) -> GraphDomain | None:
        g = self.raw["domain"].get("graph")
        if not g:
            return None
        strip = self.strip(mesh)
        code = _compile(g["phi"])

        def phi(xl):
            env = dict(SAFE_NAMES)
            for i in range(xl.shape[-1]):
                env[f"x{i + 1}"] = xl[..., i]
            env["j"] = 1j
            return np.real(np.broadcast_to(np.asarray(code(env)), xl.shape[:-1]))

        samples = phi(strip.boundary_points()[..., 1:])
        L = float(g.get("lipschitz", 0.0))
        return GraphDomain(samples, strip, L, phi)

    def graph_gamma(self) -> float | None:
        g = self.raw["domain"].get("graph") or {}
        return g.get("gamma")

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)


def mesh_label(m) -> str:
    if isinstance(m, (list, tuple)):
        return "x".join(mesh_label(v) for v in m)
    inv = 1.0 / m
    return f"1/{int(round(inv))}" if math.isclose(inv, round(inv), rel_tol=1e-9) else f"{m:g}"
