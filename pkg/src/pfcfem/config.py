"""Run configuration: YAML parsing with strict keys, rendering, presets.

A configuration document has up to seven top-level sections::

    domain:    kind: interval | polygon | regular-polygon, plus geometry
    mesh:      cells (interval) or target_h (planar)
    model:     xi, alpha, gamma, d0, dt, flow
    schedule:  t_end and/or energy_tol, max_steps     (fixed-mesh runs)
    adapt:     epsilon_e, epsilon_sigma, theta_r, theta_c, estimator
    initial:   expression string over x, y, pi, sin, cos, exp, hexcos,
               piecewise
    output:    directory for artifacts
    solver_tol: relative residual target of the linear solves

Unknown keys anywhere are rejected with their full key path.  Defaults:
dt = 1e-2, xi = 1, solver_tol = 1e-10.  `parse_config(render_config(c))`
reproduces `c` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .adapt import AdaptConfig
from .errors import ConfigError, ExpressionError
from .expressions import parse_expression
from .mesh import build_interval_mesh, build_polygon_mesh, regular_polygon
from .model import ModelParams
from .stepper import Schedule

DEFAULT_SOLVER_TOL = 1e-10


@dataclass(frozen=True)
class DomainSpec:
    """Interval, explicit convex polygon, or regular polygon."""

    kind: str
    length: float | None = None
    vertices: tuple | None = None
    sides: int | None = None
    radius: float | None = None
    center: tuple = (0.0, 0.0)

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2


@dataclass(frozen=True)
class MeshSpec:
    cells: int | None = None
    target_h: float | None = None


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec
    mesh: MeshSpec
    model: ModelParams
    initial: str
    schedule: Schedule | None = None
    adapt: AdaptConfig | None = None
    output: str = "out"
    solver_tol: float = DEFAULT_SOLVER_TOL


# -- strict-mapping helpers -----------------------------------------------

def _section(doc, key, required=False):
    value = doc.get(key)
    if value is None:
        if required:
            raise ConfigError("missing required section '%s'" % key)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("section '%s' must be a mapping" % key)
    return value


def _reject_unknown(mapping, path, known):
    for key in sorted(mapping):
        if key not in known:
            raise ConfigError("unknown key '%s.%s'" % (path, key)
                              if path else "unknown key '%s'" % key)


def _float(mapping, path, key, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigError("missing required key '%s.%s'" % (path, key))
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("key '%s.%s' must be a number, got %r"
                          % (path, key, value))
    return float(value)


def _int(mapping, path, key, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigError("missing required key '%s.%s'" % (path, key))
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("key '%s.%s' must be an integer, got %r"
                          % (path, key, value))
    return int(value)


def _str(mapping, path, key, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigError("missing required key '%s.%s'" % (path, key))
        return default
    value = mapping[key]
    if not isinstance(value, str):
        raise ConfigError("key '%s.%s' must be a string, got %r"
                          % (path, key, value))
    return value


def _point(value, path):
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or any(isinstance(c, bool) or not isinstance(c, (int, float))
                   for c in value)):
        raise ConfigError("key '%s' must be a pair of numbers, got %r"
                          % (path, value))
    return (float(value[0]), float(value[1]))


# -- section parsers ------------------------------------------------------

def _parse_domain(doc):
    section = _section(doc, "domain", required=True)
    kind = _str(section, "domain", "kind", required=True)
    if kind == "interval":
        _reject_unknown(section, "domain", {"kind", "length"})
        length = _float(section, "domain", "length", required=True)
        if length <= 0.0:
            raise ConfigError("key 'domain.length' must be positive")
        return DomainSpec(kind="interval", length=length)
    if kind == "polygon":
        _reject_unknown(section, "domain", {"kind", "vertices"})
        raw = section.get("vertices")
        if not isinstance(raw, (list, tuple)) or len(raw) < 3:
            raise ConfigError(
                "key 'domain.vertices' must list at least three points")
        vertices = tuple(_point(v, "domain.vertices[%d]" % i)
                         for i, v in enumerate(raw))
        return DomainSpec(kind="polygon", vertices=vertices)
    if kind == "regular-polygon":
        _reject_unknown(section, "domain",
                        {"kind", "sides", "radius", "center"})
        sides = _int(section, "domain", "sides", default=64)
        radius = _float(section, "domain", "radius", required=True)
        if sides < 3:
            raise ConfigError("key 'domain.sides' must be at least 3")
        if radius <= 0.0:
            raise ConfigError("key 'domain.radius' must be positive")
        center = (0.0, 0.0)
        if "center" in section and section["center"] is not None:
            center = _point(section["center"], "domain.center")
        return DomainSpec(kind="regular-polygon", sides=sides,
                          radius=radius, center=center)
    raise ConfigError(
        "key 'domain.kind' must be one of interval, polygon, "
        "regular-polygon; got %r" % kind)


def _parse_mesh(doc, domain):
    section = _section(doc, "mesh", required=True)
    _reject_unknown(section, "mesh", {"cells", "target_h"})
    cells = _int(section, "mesh", "cells")
    target_h = _float(section, "mesh", "target_h")
    if domain.dim == 1:
        if cells is None:
            raise ConfigError("interval domains need 'mesh.cells'")
        if target_h is not None:
            raise ConfigError("'mesh.target_h' does not apply to intervals")
        if cells < 1:
            raise ConfigError("key 'mesh.cells' must be positive")
    else:
        if target_h is None:
            raise ConfigError("planar domains need 'mesh.target_h'")
        if cells is not None:
            raise ConfigError("'mesh.cells' does not apply to planar domains")
        if target_h <= 0.0:
            raise ConfigError("key 'mesh.target_h' must be positive")
    return MeshSpec(cells=cells, target_h=target_h)


def _parse_model(doc):
    section = _section(doc, "model")
    _reject_unknown(section, "model",
                    {"xi", "alpha", "gamma", "d0", "dt", "flow"})
    kwargs = {}
    for key in ("xi", "alpha", "gamma", "d0", "dt"):
        value = _float(section, "model", key)
        if value is not None:
            kwargs[key] = value
    flow = _str(section, "model", "flow")
    if flow is not None:
        kwargs["flow"] = flow
    try:
        return ModelParams(**kwargs)
    except ValueError as exc:
        raise ConfigError("section 'model': %s" % exc) from None


def _parse_schedule(doc):
    if "schedule" not in doc or doc["schedule"] is None:
        return None
    section = _section(doc, "schedule")
    _reject_unknown(section, "schedule", {"t_end", "energy_tol", "max_steps"})
    kwargs = {"t_end": _float(section, "schedule", "t_end"),
              "energy_tol": _float(section, "schedule", "energy_tol")}
    max_steps = _int(section, "schedule", "max_steps")
    if max_steps is not None:
        kwargs["max_steps"] = max_steps
    try:
        return Schedule(**kwargs)
    except ValueError as exc:
        raise ConfigError("section 'schedule': %s" % exc) from None


def _parse_adapt(doc):
    if "adapt" not in doc or doc["adapt"] is None:
        return None
    section = _section(doc, "adapt")
    _reject_unknown(section, "adapt",
                    {"epsilon_e", "epsilon_sigma", "theta_r", "theta_c",
                     "estimator", "max_steps"})
    kwargs = {
        "epsilon_e": _float(section, "adapt", "epsilon_e", required=True),
        "epsilon_sigma": _float(section, "adapt", "epsilon_sigma",
                                required=True),
    }
    for key in ("theta_r", "theta_c"):
        value = _float(section, "adapt", key)
        if value is not None:
            kwargs[key] = value
    estimator = _str(section, "adapt", "estimator")
    if estimator is not None:
        kwargs["estimator"] = estimator
    max_steps = _int(section, "adapt", "max_steps")
    if max_steps is not None:
        kwargs["max_steps"] = max_steps
    try:
        return AdaptConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("section 'adapt': %s" % exc) from None


def parse_config(text):
    """Parse a YAML document into a validated RunConfig."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("malformed YAML: %s" % exc) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    _reject_unknown(doc, "", {"domain", "mesh", "model", "schedule",
                              "adapt", "initial", "output", "solver_tol"})
    domain = _parse_domain(doc)
    mesh = _parse_mesh(doc, domain)
    model = _parse_model(doc)
    schedule = _parse_schedule(doc)
    adapt = _parse_adapt(doc)
    initial = _str(doc, "", "initial", required=True)
    output = _str(doc, "", "output", default="out")
    solver_tol = _float(doc, "", "solver_tol", default=DEFAULT_SOLVER_TOL)
    if solver_tol <= 0.0:
        raise ConfigError("key 'solver_tol' must be positive")
    if schedule is None and adapt is None:
        raise ConfigError("need a 'schedule' or an 'adapt' section")
    try:
        expr = parse_expression(initial)
    except ExpressionError as exc:
        raise ConfigError("key 'initial': %s" % exc) from None
    if domain.dim == 1 and "y" in expr.variables:
        raise ConfigError(
            "key 'initial': expression %r needs y but the domain "
            "is an interval" % initial)
    return RunConfig(domain=domain, mesh=mesh, model=model,
                     schedule=schedule, adapt=adapt, initial=initial,
                     output=output, solver_tol=solver_tol)


def load_config(path):
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def render_config(cfg):
    """Serialize a RunConfig to YAML; parse_config inverts this exactly."""
    doc = {}
    d = cfg.domain
    if d.kind == "interval":
        doc["domain"] = {"kind": "interval", "length": float(d.length)}
        doc["mesh"] = {"cells": int(cfg.mesh.cells)}
    elif d.kind == "polygon":
        doc["domain"] = {"kind": "polygon",
                         "vertices": [[float(c) for c in v]
                                      for v in d.vertices]}
        doc["mesh"] = {"target_h": float(cfg.mesh.target_h)}
    else:
        doc["domain"] = {"kind": "regular-polygon", "sides": int(d.sides),
                         "radius": float(d.radius),
                         "center": [float(c) for c in d.center]}
        doc["mesh"] = {"target_h": float(cfg.mesh.target_h)}
    m = cfg.model
    doc["model"] = {"xi": float(m.xi), "alpha": float(m.alpha),
                    "gamma": float(m.gamma), "d0": float(m.d0),
                    "dt": float(m.dt), "flow": m.flow.value}
    if cfg.schedule is not None:
        block = {}
        if cfg.schedule.t_end is not None:
            block["t_end"] = cfg.schedule.t_end
        if cfg.schedule.energy_tol is not None:
            block["energy_tol"] = cfg.schedule.energy_tol
        block["max_steps"] = cfg.schedule.max_steps
        doc["schedule"] = block
    if cfg.adapt is not None:
        a = cfg.adapt
        doc["adapt"] = {"epsilon_e": a.epsilon_e,
                        "epsilon_sigma": a.epsilon_sigma,
                        "theta_r": a.theta_r, "theta_c": a.theta_c,
                        "estimator": a.estimator.value,
                        "max_steps": a.max_steps}
    doc["initial"] = cfg.initial
    doc["output"] = cfg.output
    doc["solver_tol"] = cfg.solver_tol
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def build_mesh(cfg):
    """Construct the initial mesh the configuration describes."""
    d = cfg.domain
    if d.kind == "interval":
        return build_interval_mesh(d.length, cfg.mesh.cells)
    if d.kind == "polygon":
        vertices = [list(v) for v in d.vertices]
    else:
        vertices = regular_polygon(d.sides, d.radius, center=d.center)
    return build_polygon_mesh(vertices, cfg.mesh.target_h)


def initial_values(cfg, mesh):
    """Evaluate the configured initial expression at the mesh nodes."""
    expr = parse_expression(cfg.initial)
    if mesh.dim == 1:
        return expr(mesh.nodes[:, 0])
    return expr(mesh.nodes[:, 0], mesh.nodes[:, 1])


# -- built-in experiment presets ------------------------------------------

def _square(x0, x1):
    return ((float(x0), float(x0)), (float(x1), float(x0)),
            (float(x1), float(x1)), (float(x0), float(x1)))


def _presets():
    pi = np.pi
    fig1 = RunConfig(
        domain=DomainSpec(kind="interval", length=4 * pi),
        mesh=MeshSpec(cells=256),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=16.0,
                          dt=2.0**-4, flow="allen-cahn"),
        schedule=Schedule(energy_tol=1e-6),
        initial="exp(x/(4*pi))",
        output="out-fig1")
    side = 4 * pi
    fig2_triangle = RunConfig(
        domain=DomainSpec(kind="polygon", vertices=(
            (0.0, 0.0), (side, 0.0), (side / 2, side * np.sqrt(3) / 2))),
        mesh=MeshSpec(target_h=side / 16),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=500.0,
                          dt=1e-2, flow="allen-cahn"),
        schedule=Schedule(energy_tol=1e-4),
        initial="cos(x)",
        output="out-fig2-triangle")
    fig2_hexagon = RunConfig(
        domain=DomainSpec(kind="regular-polygon", sides=6, radius=2 * pi),
        mesh=MeshSpec(target_h=1.0),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=500.0,
                          dt=1e-2, flow="allen-cahn"),
        schedule=Schedule(energy_tol=1e-4),
        initial="cos(x)",
        output="out-fig2-hexagon")
    fig2_circle = RunConfig(
        domain=DomainSpec(kind="regular-polygon", sides=64, radius=2 * pi),
        mesh=MeshSpec(target_h=1.6),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=500.0,
                          dt=1e-2, flow="allen-cahn"),
        schedule=Schedule(energy_tol=1e-4),
        initial="cos(x)",
        output="out-fig2-circle")
    fig3 = RunConfig(
        domain=DomainSpec(kind="polygon", vertices=_square(0.0, pi)),
        mesh=MeshSpec(target_h=pi / 8),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=500.0,
                          dt=1e-2, flow="allen-cahn"),
        adapt=AdaptConfig(epsilon_e=1e-6, epsilon_sigma=0.05,
                          estimator="gradient-norm"),
        initial="cos(x)",
        output="out-fig3")
    fig4 = RunConfig(
        domain=DomainSpec(kind="polygon", vertices=_square(-2 * pi, 2 * pi)),
        mesh=MeshSpec(target_h=pi / 4),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.6, d0=500.0,
                          dt=1e-2, flow="allen-cahn"),
        adapt=AdaptConfig(epsilon_e=1e-4, epsilon_sigma=0.05,
                          estimator="gradient-norm"),
        initial="cos(x)+cos(y)",
        output="out-fig4")
    ry = 4 * pi / np.sqrt(3)
    fig5 = RunConfig(
        domain=DomainSpec(kind="polygon", vertices=(
            (-2 * pi, -ry), (2 * pi, -ry), (2 * pi, ry), (-2 * pi, ry))),
        mesh=MeshSpec(target_h=pi / 4),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.8, d0=500.0,
                          dt=1e-2, flow="allen-cahn"),
        adapt=AdaptConfig(epsilon_e=1e-4, epsilon_sigma=0.05,
                          estimator="gradient-norm"),
        initial="hexcos()",
        output="out-fig5")
    fig6 = RunConfig(
        domain=DomainSpec(kind="polygon", vertices=_square(0.0, 6 * pi)),
        mesh=MeshSpec(target_h=6 * pi / 16),
        model=ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=5000.0,
                          dt=1e-2, flow="allen-cahn"),
        adapt=AdaptConfig(epsilon_e=1e-3, epsilon_sigma=0.05,
                          theta_r=0.95, theta_c=0.4,
                          estimator="gradient-norm"),
        initial=("piecewise((x < 2*pi, 6*sin(x+pi/2)), "
                 "(x > 4*pi, hexcos()), 0)"),
        output="out-fig6")
    return {"fig1": fig1, "fig2-triangle": fig2_triangle,
            "fig2-hexagon": fig2_hexagon, "fig2-circle": fig2_circle,
            "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6}


PRESET_NAMES = tuple(sorted(_presets()))


def preset(name):
    """Named experiment configuration; raises ConfigError on unknown names."""
    table = _presets()
    if name not in table:
        raise ConfigError("unknown preset %r; available: %s"
                          % (name, ", ".join(sorted(table))))
    return table[name]
