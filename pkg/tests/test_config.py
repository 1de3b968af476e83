"""Config schema, presets and overrides."""

import json

import pytest

from pelliptic.config import ExperimentConfig, load_config, mesh_label, parse_mesh_levels, preset_names
from pelliptic.errors import ConfigError

MINIMAL = {"domain": {"n": 2}, "field": {"family": "constant", "A": [[1, 0], [0, 1]]}}


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate(name):
    cfg = ExperimentConfig.load(name)
    assert cfg.meshes == sorted(cfg.meshes, reverse=True)
    assert cfg.field(cfg.meshes[0]).domain.n == cfg.n


def test_expected_presets_present():
    assert {"block_form", "complex_isotropic", "oscillatory", "laplace_flat", "graph_bump"} <= set(preset_names())


def test_defaults_merged():
    cfg = load_config(MINIMAL)
    assert cfg["apertures"] == {"a": 1.0, "b": 2.0}
    assert cfg["domain"]["h"] == 1.0


def test_file_and_inline(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(MINIMAL))
    assert load_config(str(path)) == load_config(json.dumps(MINIMAL))


@pytest.mark.parametrize("bad", [
    {"domain": {"n": 2}},
    {"domain": {"n": 2}, "field": {"family": "unknown"}},
    dict(MINIMAL, meshes=[1 / 32, 1 / 16]),
    dict(MINIMAL, apertures={"a": 2.0, "b": 1.0}),
    dict(MINIMAL, extra=1),
    "no_such_preset",
    "{not json",
])
def test_invalid(bad):
    with pytest.raises(ConfigError):
        load_config(bad)


def test_error_names_location():
    with pytest.raises(ConfigError, match="domain"):
        load_config({"domain": {"n": 1}, "field": MINIMAL["field"]})


@pytest.mark.parametrize("text,want", [
    ("32,64", [1 / 32, 1 / 64]),
    ("1/16, 1/32", [1 / 16, 1 / 32]),
    ("0.125", [0.125]),
])
def test_parse_mesh_levels(text, want):
    assert parse_mesh_levels(text) == pytest.approx(want)


def test_parse_mesh_levels_empty():
    with pytest.raises(ConfigError):
        parse_mesh_levels(" , ")


def test_overrides_are_validated():
    cfg = ExperimentConfig.load(MINIMAL, meshes=[1 / 8], seed=7)
    assert cfg.meshes == [0.125] and cfg.seed == 7
    with pytest.raises(ConfigError):
        ExperimentConfig.load(MINIMAL, meshes=[1 / 8, 1 / 4])


@pytest.mark.parametrize("m,label", [(1 / 32, "1/32"), (0.3, "0.3"), ((2**-10, 1 / 32), "1/1024x1/32")])
def test_mesh_label(m, label):
    assert mesh_label(m) == label


def test_graph_builder():
    cfg = ExperimentConfig.load("graph_bump")
    g = cfg.graph(cfg.meshes[0])
    assert g is not None and g.phi.max() > 0
