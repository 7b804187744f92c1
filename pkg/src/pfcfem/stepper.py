"""First-order time integrator for both gradient flows.

Each step treats the bulk nonlinearity through the auxiliary scalar s:
the load vector q is assembled from the current field, the implicit system
(C + (dt/2) q_left q_rightᵀ) Φ = c is solved by rank-one elimination, the
splitting field Ψ is recovered through a mass solve, and s is advanced by
the discrete chain rule.  The modified energy (xi²/2)‖Ψ‖² + s² then
decreases at every step regardless of dt.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (FieldVector, assemble_mass, assemble_sav_load,
                       assemble_stiffness, integrate_bulk_energy, interpolate)
from .errors import ModelViolationError, SolverFailureError
from .model import FlowType, energy_report, sav_init
from .solver import (DEFAULT_TOL, OperatorC, lumped_inverse_preconditioner,
                     rank_one_solve)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SavState:
    """The full discrete unknown after n steps.

    varphi is the chemical potential, recovered only for the conserved
    flow; time is always step_index·dt exactly (recomputed, never
    accumulated, so there is no float drift).
    """

    mesh: object
    phi: FieldVector
    psi: FieldVector
    varphi: FieldVector | None
    s: float
    time: float
    step_index: int


class Operators:
    """Assembled matrices and factorizations for one mesh + parameter set.

    Rebuilt whenever the mesh changes; M and A can be reused across
    parameter sets on the same mesh via the `base` argument.
    """

    def __init__(self, mesh, params, tol=DEFAULT_TOL, base=None):
        self.mesh = mesh
        self.params = params
        self.tol = tol
        if base is not None and base.mesh is mesh:
            self.M, self.A = base.M, base.A
            self.mass_solve = base.mass_solve
        else:
            self.M = assemble_mass(mesh)
            self.A = assemble_stiffness(mesh)
            self.mass_solve = spla.splu(self.M.csr.tocsc()).solve
        precond = lumped_inverse_preconditioner(self.M, self.A, params)
        self.C = OperatorC(self.M, self.A, params, self.mass_solve,
                           precond_solve=precond)
        self.B = self.C.B


def build_operators(mesh, params, tol=DEFAULT_TOL, base=None):
    return Operators(mesh, params, tol=tol, base=base)


def init_state(mesh, u0, params, ops=None):
    """Initial state: nodal interpolant, splitting field, auxiliary scalar.

    u0 may be a callable of the coordinates or an array of nodal values.
    The SAV shift is validated here: E1(phi0) + d0 must be positive, and a
    value below 1 draws a warning, since a small radicand puts the
    auxiliary scalar near the singular point of its square root.
    """
    if callable(u0):
        phi = interpolate(mesh, u0)
    else:
        phi = FieldVector(np.asarray(u0, dtype=float), mesh)
        if phi.shape[0] != mesh.n_nodes:
            raise ValueError("initial values sized %d, mesh has %d nodes"
                             % (phi.shape[0], mesh.n_nodes))
    e1 = integrate_bulk_energy(mesh, phi, params)
    if e1 + params.d0 <= 0.0:
        raise ModelViolationError(
            "E1(phi0) + d0 = %r is not positive; raise d0 (E1 = %r)"
            % (e1 + params.d0, e1))
    if e1 + params.d0 < 1.0:
        log.warning("E1(phi0) + d0 = %g < 1; consider raising d0",
                    e1 + params.d0)
    if ops is None:
        ops = build_operators(mesh, params)
    psi = FieldVector(ops.mass_solve(ops.B.dot(np.asarray(phi))), mesh)
    s = sav_init(mesh, phi, params)
    return SavState(mesh=mesh, phi=phi, psi=psi, varphi=None, s=s,
                    time=0.0, step_index=0)


def _advance(state, ops, params):
    """One step of the scheme shared by both flows."""
    mesh = state.mesh
    if mesh.tag != ops.mesh.tag:
        raise ValueError(
            "state lives on mesh %s but the operators were built on mesh %s"
            % (mesh.tag, ops.mesh.tag))
    phi = np.asarray(state.phi)
    dt = params.dt
    q = np.asarray(assemble_sav_load(mesh, state.phi, params))
    q_phi = float(q @ phi)
    m_phi = ops.M.csr.dot(phi)
    if params.flow is FlowType.L2_ALLEN_CAHN:
        q_left = q
    else:
        q_left = ops.A.csr.dot(ops.mass_solve(q))
    c = m_phi - dt * q_left * (state.s - 0.5 * q_phi)
    try:
        phi_new = rank_one_solve(
            ops.C,
            FieldVector(q_left, mesh),
            FieldVector(q, mesh),
            FieldVector(c, mesh),
            dt, tol=ops.tol)
    except SolverFailureError as exc:
        raise SolverFailureError(
            "step %d (t=%g): %s" % (state.step_index + 1,
                                    (state.step_index + 1) * dt, exc),
            residual=exc.residual) from exc
    phi_new = np.asarray(phi_new)
    psi_new = ops.mass_solve(ops.B.dot(phi_new))
    s_new = state.s + 0.5 * float(q @ (phi_new - phi))
    varphi = None
    if params.flow is FlowType.HM1_CAHN_HILLIARD:
        rhs = params.xi**2 * ops.B.dot(psi_new) + q * s_new
        varphi = FieldVector(ops.mass_solve(rhs), mesh)
    idx = state.step_index + 1
    return SavState(mesh=mesh,
                    phi=FieldVector(phi_new, mesh),
                    psi=FieldVector(psi_new, mesh),
                    varphi=varphi,
                    s=s_new,
                    time=idx * dt,
                    step_index=idx)


def step_allen_cahn(state, ops, params):
    """One step of the non-conserved (L²) flow."""
    if params.flow is not FlowType.L2_ALLEN_CAHN:
        raise ValueError("params.flow is not the L2 flow")
    return _advance(state, ops, params)


def step_cahn_hilliard(state, ops, params):
    """One step of the conserved (H⁻¹) flow, including the chemical
    potential recovery."""
    if params.flow is not FlowType.HM1_CAHN_HILLIARD:
        raise ValueError("params.flow is not the H-1 flow")
    return _advance(state, ops, params)


@dataclass(frozen=True)
class Schedule:
    """Stopping rule: fixed horizon t_end, energy plateau, or both."""

    t_end: float | None = None
    energy_tol: float | None = None
    max_steps: int = 10**6

    def __post_init__(self):
        if self.t_end is None and self.energy_tol is None:
            raise ValueError("schedule needs t_end or energy_tol")
        if self.t_end is not None and self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if self.energy_tol is not None and self.energy_tol <= 0.0:
            raise ValueError("energy_tol must be positive")


def run(state, params, schedule, ops=None, observer=None):
    """Advance until the schedule stops, tracing energies per step.

    Returns (reports, final_state) where reports[0] describes the initial
    state and reports[k] the state after k steps.  `observer(state)` is
    called after every accepted step.
    """
    if ops is None:
        ops = build_operators(state.mesh, params)
    reports = [energy_report(state, ops.M, params)]
    prev_modified = reports[0].modified_energy
    while True:
        if schedule.t_end is not None and state.time >= schedule.t_end:
            break
        if state.step_index >= schedule.max_steps:
            log.warning("run stopped at max_steps=%d", schedule.max_steps)
            break
        state = _advance(state, ops, params)
        rep = energy_report(state, ops.M, params)
        reports.append(rep)
        if observer is not None:
            observer(state)
        if (schedule.energy_tol is not None
                and abs(rep.modified_energy - prev_modified)
                <= schedule.energy_tol):
            prev_modified = rep.modified_energy
            break
        prev_modified = rep.modified_energy
    return reports, state
