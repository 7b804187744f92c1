"""Configuration parsing, validation diagnostics, rendering, presets."""

import numpy as np
import pytest

from pfcfem.config import (PRESET_NAMES, build_mesh, initial_values,
                           load_config, parse_config, preset, render_config)
from pfcfem.errors import ConfigError

FIG1_DOC = """
domain:
  kind: interval
  length: %r
mesh:
  cells: 256
model:
  xi: 1.0
  alpha: -1.0
  gamma: 0.2
  d0: 16.0
  dt: 0.0625
  flow: allen-cahn
schedule:
  energy_tol: 1.0e-6
initial: exp(x/(4*pi))
output: out-fig1
""" % (4 * np.pi)


def test_explicit_document_matches_preset():
    cfg = parse_config(FIG1_DOC)
    assert cfg == preset("fig1")


def test_defaults():
    cfg = parse_config("""
domain: {kind: interval, length: 10.0}
mesh: {cells: 8}
schedule: {t_end: 1.0}
initial: cos(x)
""")
    assert cfg.model.dt == pytest.approx(1e-2)
    assert cfg.model.xi == 1.0
    assert cfg.model.alpha == -1.0
    assert cfg.solver_tol == 1e-10
    assert cfg.output == "out"
    assert cfg.adapt is None
    assert cfg.schedule.max_steps == 10**6


@pytest.mark.parametrize("doc,fragment", [
    ("", "domain"),
    ("domain: {kind: interval, length: 1.0}\n", "mesh"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\n", "initial"),
    ("domain: {kind: box, length: 1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x)\n", "domain.kind"),
    ("domain: {kind: interval, length: -1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x)\n", "domain.length"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "model: {zz: 1}\nschedule: {t_end: 1.0}\ninitial: cos(x)\n",
     "model.zz"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "model: {xi: hello}\nschedule: {t_end: 1.0}\ninitial: cos(x)\n",
     "model.xi"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 2.5}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x)\n", "mesh.cells"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x)\nbogus: 1\n", "bogus"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(y)\n", "initial"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "initial: cos(x)\n", "schedule"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x\n", "initial"),
    ("domain: {kind: interval, length: 1.0}\n"
     "mesh: {cells: 4, target_h: 0.5}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x)\n", "target_h"),
    ("domain: {kind: polygon, vertices: [[0, 0], [1, 0]]}\n"
     "mesh: {target_h: 0.5}\nschedule: {t_end: 1.0}\ninitial: cos(x)\n",
     "vertices"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "schedule: {t_end: 1.0}\ninitial: cos(x)\nsolver_tol: -1.0\n",
     "solver_tol"),
    ("domain: {kind: interval, length: 1.0}\nmesh: {cells: 4}\n"
     "model: {xi: true}\nschedule: {t_end: 1.0}\ninitial: cos(x)\n",
     "model.xi"),
    ("[1, 2]", "mapping"),
])
def test_diagnostics_name_the_offending_key(doc, fragment):
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        parse_config(doc)


def test_threshold_order_rejected():
    doc = """
domain: {kind: polygon, vertices: [[0, 0], [1, 0], [1, 1], [0, 1]]}
mesh: {target_h: 0.5}
adapt: {epsilon_e: 1.0e-6, epsilon_sigma: 0.05, theta_r: 0.5, theta_c: 0.6}
initial: cos(x)
"""
    with pytest.raises(ConfigError, match="theta"):
        parse_config(doc)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_render_parse_round_trip(name):
    cfg = preset(name)
    assert parse_config(render_config(cfg)) == cfg


def test_unknown_preset():
    with pytest.raises(ConfigError, match="nope"):
        preset("nope")


def test_build_mesh_interval_and_polygon():
    cfg = parse_config(FIG1_DOC)
    mesh = build_mesh(cfg)
    assert mesh.dim == 1 and mesh.n_nodes == 257
    hexmesh = build_mesh(preset("fig2-hexagon"))
    assert hexmesh.dim == 2 and hexmesh.n_elements > 0


def test_initial_values_both_dims():
    cfg = parse_config(FIG1_DOC)
    mesh = build_mesh(cfg)
    vals = initial_values(cfg, mesh)
    np.testing.assert_allclose(vals, np.exp(mesh.nodes[:, 0] / (4 * np.pi)),
                               rtol=1e-14)
    cfg2 = preset("fig4")
    mesh2 = build_mesh(cfg2)
    vals2 = initial_values(cfg2, mesh2)
    np.testing.assert_allclose(
        vals2, np.cos(mesh2.nodes[:, 0]) + np.cos(mesh2.nodes[:, 1]),
        rtol=1e-13, atol=1e-13)


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(FIG1_DOC, encoding="utf-8")
    assert load_config(str(path)) == preset("fig1")


def test_malformed_yaml():
    with pytest.raises(ConfigError, match="YAML"):
        parse_config("domain: [unclosed")


def test_regular_polygon_defaults_and_center():
    cfg = parse_config("""
domain: {kind: regular-polygon, radius: 2.0, center: [1.0, -1.0]}
mesh: {target_h: 0.8}
schedule: {t_end: 0.1}
initial: cos(x)
""")
    assert cfg.domain.sides == 64
    assert cfg.domain.center == (1.0, -1.0)
    mesh = build_mesh(cfg)
    centroid = mesh.nodes.mean(axis=0)
    np.testing.assert_allclose(centroid, [1.0, -1.0], atol=0.2)
