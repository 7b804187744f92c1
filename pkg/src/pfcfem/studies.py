"""Convergence studies: first order in the step size, second in the mesh.

Both studies integrate the 1D lamellar setup (exponential initial data on
an interval) to a short fixed horizon and compare against a much finer
reference computed with the same scheme.  The time study shares one mesh
across all runs so fields are compared nodewise; the space study runs on
nested uniform meshes and evaluates the reference solution at the coarse
nodes through point location.  Errors are L2 norms weighted by the mass
matrix of the mesh the error lives on; the auxiliary scalar error is an
absolute value.  Rates are base-2 logarithms of consecutive error ratios,
matching the halving of the resolution column.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assembly import evaluate, l2_norm
from .mesh import build_interval_mesh
from .model import ModelParams
from .solver import DEFAULT_TOL
from .stepper import Schedule, build_operators, init_state, run

DEFAULT_LENGTH = 4.0 * np.pi
TIME_STEPS = (2.0**-10, 2.0**-11, 2.0**-12, 2.0**-13)
TIME_REFERENCE_DT = 2.0**-16
SPACE_CELLS = (16, 32, 64, 128)
SPACE_REFERENCE_CELLS = 4096
SPACE_DT = 2.0**-12
SPACE_REFERENCE_TOL = 1e-8
DEFAULT_HORIZON = 2.0**-6


def default_study_params():
    """Physics shared by both studies (the conservative-shift variant of
    the 1D lamellar run)."""
    return ModelParams(xi=1.0, alpha=-1.0, gamma=0.2, d0=25.0,
                       dt=1e-2, flow="allen-cahn")


def _default_u0(length):
    return lambda x: np.exp(x / length)


@dataclass(frozen=True)
class StudyRow:
    resolution: float
    e_phi: float
    e_psi: float
    e_s: float
    rate_phi: float | None = None
    rate_psi: float | None = None
    rate_s: float | None = None


@dataclass(frozen=True)
class StudyResult:
    kind: str  # "time" or "space"
    rows: tuple


def _attach_rates(kind, resolutions, errors):
    rows = []
    for i, res in enumerate(resolutions):
        e_phi, e_psi, e_s = errors[i]
        if i == 0:
            rows.append(StudyRow(res, e_phi, e_psi, e_s))
        else:
            p_phi, p_psi, p_s = errors[i - 1]
            rows.append(StudyRow(
                res, e_phi, e_psi, e_s,
                rate_phi=float(np.log2(p_phi / e_phi)),
                rate_psi=float(np.log2(p_psi / e_psi)),
                rate_s=float(np.log2(p_s / e_s))))
    return StudyResult(kind=kind, rows=tuple(rows))


def time_study(params=None, length=DEFAULT_LENGTH, cells=256,
               dts=TIME_STEPS, reference_dt=TIME_REFERENCE_DT,
               horizon=DEFAULT_HORIZON, u0=None, tol=DEFAULT_TOL):
    """Errors against a fine-step reference on one shared mesh."""
    if params is None:
        params = default_study_params()
    if u0 is None:
        u0 = _default_u0(length)
    mesh = build_interval_mesh(length, cells)
    ref_params = replace(params, dt=reference_dt)
    ref_ops = build_operators(mesh, ref_params, tol=tol)
    state0 = init_state(mesh, u0, ref_params, ops=ref_ops)
    schedule = Schedule(t_end=horizon)
    _, ref = run(state0, ref_params, schedule, ops=ref_ops)
    errors = []
    for dt in dts:
        params_i = replace(params, dt=dt)
        ops = build_operators(mesh, params_i, tol=tol, base=ref_ops)
        _, final = run(state0, params_i, schedule, ops=ops)
        errors.append((
            l2_norm(ref_ops.M, np.asarray(final.phi) - np.asarray(ref.phi)),
            l2_norm(ref_ops.M, np.asarray(final.psi) - np.asarray(ref.psi)),
            abs(final.s - ref.s)))
    return _attach_rates("time", list(dts), errors)


def space_study(params=None, length=DEFAULT_LENGTH, cell_counts=SPACE_CELLS,
                reference_cells=SPACE_REFERENCE_CELLS, dt=SPACE_DT,
                horizon=DEFAULT_HORIZON, u0=None, tol=DEFAULT_TOL,
                reference_tol=SPACE_REFERENCE_TOL):
    """Errors against a fine-mesh reference at a fixed small step.

    The reference mesh is fine enough that the linear systems sit near
    their round-off conditioning floor, so its solves use a looser
    tolerance; it is still orders of magnitude below the discretization
    errors being measured.
    """
    if params is None:
        params = default_study_params()
    if u0 is None:
        u0 = _default_u0(length)
    params = replace(params, dt=dt)
    schedule = Schedule(t_end=horizon)
    ref_mesh = build_interval_mesh(length, reference_cells)
    ref_ops = build_operators(ref_mesh, params, tol=max(tol, reference_tol))
    ref0 = init_state(ref_mesh, u0, params, ops=ref_ops)
    _, ref = run(ref0, params, schedule, ops=ref_ops)
    resolutions = []
    errors = []
    for cells in cell_counts:
        mesh = build_interval_mesh(length, cells)
        resolutions.append(length / cells)
        ops = build_operators(mesh, params, tol=tol)
        state0 = init_state(mesh, u0, params, ops=ops)
        _, final = run(state0, params, schedule, ops=ops)
        ref_phi = evaluate(ref_mesh, np.asarray(ref.phi), mesh.nodes)
        ref_psi = evaluate(ref_mesh, np.asarray(ref.psi), mesh.nodes)
        errors.append((
            l2_norm(ops.M, np.asarray(final.phi) - ref_phi),
            l2_norm(ops.M, np.asarray(final.psi) - ref_psi),
            abs(final.s - ref.s)))
    return _attach_rates("space", resolutions, errors)


STUDY_HEADER = "resolution,e_phi,rate_phi,e_psi,rate_psi,e_s,rate_s"


def write_study_csv(target, result):
    lines = [STUDY_HEADER]
    for row in result.rows:
        lines.append("%r,%r,%s,%r,%s,%r,%s" % (
            row.resolution,
            row.e_phi, "" if row.rate_phi is None else repr(row.rate_phi),
            row.e_psi, "" if row.rate_psi is None else repr(row.rate_psi),
            row.e_s, "" if row.rate_s is None else repr(row.rate_s)))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as stream:
            stream.write(text)


def render_table(result):
    """Human-readable error/rate table."""
    label = "dt" if result.kind == "time" else "h"
    lines = ["%-12s %-10s %-6s %-10s %-6s %-10s %-6s"
             % (label, "e_phi", "rate", "e_psi", "rate", "e_s", "rate")]
    for row in result.rows:
        def fmt(rate):
            return "--" if rate is None else "%.2f" % rate
        lines.append("%-12.4e %-10.3e %-6s %-10.3e %-6s %-10.3e %-6s" % (
            row.resolution, row.e_phi, fmt(row.rate_phi),
            row.e_psi, fmt(row.rate_psi), row.e_s, fmt(row.rate_s)))
    return "\n".join(lines)
