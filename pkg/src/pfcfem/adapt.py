"""Adaptive time loop: gradient recovery, element indicators, marking,
solution transfer, and the energy-tolerance driven outer iteration.

Recovery follows the superconvergent patch idea: the piecewise-constant
gradient of the P1 solution is sampled at element centroids and fitted,
per node and per component, by a linear polynomial over the node's element
patch.  The fitted field is smoother than the raw gradient and drives two
indicators: the recovery error ||grad u - R u|| per element, and the plain
recovered-gradient magnitude ||R u|| per element, which concentrates
elements on interfaces.

Adaptation triggers on the population standard deviation of the indicator
values: a flat distribution means the mesh is balanced and is left alone.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .assembly import FieldVector, integrate_bulk_energy
from .mesh import (coarsen, element_measures, refine, shape_gradients,
                   transfer_nodal)
from .model import energy_report
from .solver import DEFAULT_TOL
from .stepper import SavState, _advance, build_operators, init_state

log = logging.getLogger(__name__)


class EstimatorKind(enum.Enum):
    """Which per-element indicator drives the marking."""

    RECOVERY_H1 = "recovery-h1"
    GRADIENT_NORM = "gradient-norm"


def _coerce_estimator(value):
    if isinstance(value, EstimatorKind):
        return value
    try:
        return EstimatorKind(value)
    except ValueError:
        raise ValueError(
            "unknown estimator %r; expected one of %s"
            % (value, [k.value for k in EstimatorKind])) from None


@dataclass(frozen=True)
class AdaptConfig:
    """Tolerances and thresholds of the adaptive loop.

    epsilon_e stops the time loop once the modified energy moves by less
    than this between consecutive steps.  epsilon_sigma is the indicator
    spread above which the mesh is adapted (set it to inf to disable
    adaptation entirely).  theta_r and theta_c are mean-relative marking
    thresholds: refine where the indicator exceeds theta_r times the mean,
    coarsen where it falls below theta_c times the mean.
    """

    epsilon_e: float
    epsilon_sigma: float
    theta_r: float = 0.95
    theta_c: float = 0.4
    estimator: EstimatorKind = EstimatorKind.GRADIENT_NORM
    max_steps: int = 10**6

    def __post_init__(self):
        object.__setattr__(self, "estimator",
                           _coerce_estimator(self.estimator))
        if not self.epsilon_e > 0.0:
            raise ValueError("epsilon_e must be positive")
        if not self.epsilon_sigma > 0.0:
            raise ValueError("epsilon_sigma must be positive")
        if not 0.0 < self.theta_c < self.theta_r <= 1.0:
            raise ValueError(
                "thresholds must satisfy 0 < theta_c < theta_r <= 1 "
                "(got theta_c=%r, theta_r=%r)" % (self.theta_c, self.theta_r))
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class IndicatorField:
    """Per-element indicator values with their mean and population std."""

    values: np.ndarray
    mean: float
    std: float


@dataclass(frozen=True)
class AdaptRecord:
    """One row of the adaptation log."""

    step: int
    time: float
    n_elements: int
    sigma: float
    refined: int
    coarsened: int
    modified_energy: float


def _element_gradients(mesh, u):
    """Piecewise-constant gradient of the P1 field, shape (K, dim)."""
    return np.einsum("kpd,kp->kd", shape_gradients(mesh),
                     np.asarray(u, dtype=float)[mesh.elements])


def recover_gradient(mesh, u):
    """Nodal recovered gradient by patch least squares, shape (N, dim).

    Per node, a linear polynomial (per gradient component) is fitted to
    the element gradients sampled at the centroids of the node's patch and
    evaluated at the node.  Nodes whose patch is too small to determine a
    linear fit borrow the fit of the nearest interior node; patches whose
    fit system is singular (collinear centroids) fall back to the
    area-weighted average of the patch gradients.  Every branch reproduces
    constant gradients, so linear fields are recovered exactly.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_nodes:
        raise ValueError("field sized %d, mesh has %d nodes"
                         % (u.shape[0], mesh.n_nodes))
    dim = mesh.dim
    m = dim + 1  # unknowns of a linear fit: constant + one slope per axis
    gk = _element_gradients(mesh, u)
    centroids = mesh.nodes[mesh.elements].mean(axis=1)
    measures = np.asarray(element_measures(mesh), dtype=float)
    patches = mesh.node_to_elements()
    sizes = np.array([len(p) for p in patches], dtype=np.int64)

    coeffs = np.zeros((mesh.n_nodes, m, dim))
    center = np.zeros((mesh.n_nodes, dim))
    scale = np.ones(mesh.n_nodes)
    fit_ok = np.zeros(mesh.n_nodes, dtype=bool)

    for size in np.unique(sizes):
        if size < m:
            continue
        nodes_g = np.nonzero(sizes == size)[0]
        patch = np.stack([patches[n] for n in nodes_g])  # (n_g, size)
        cc = centroids[patch]                            # (n_g, size, dim)
        gg = gk[patch]                                   # (n_g, size, dim)
        cbar = cc.mean(axis=1, keepdims=True)
        cc = cc - cbar
        sc = np.abs(cc).reshape(len(nodes_g), -1).max(axis=1)
        sc = np.maximum(sc, 1e-300)
        cc = cc / sc[:, None, None]
        design = np.concatenate(
            [np.ones((len(nodes_g), size, 1)), cc], axis=2)  # (n_g, size, m)
        xtx = np.einsum("npi,npj->nij", design, design)
        xtg = np.einsum("npi,npd->nid", design, gg)
        ev = np.linalg.eigvalsh(xtx)
        ok = ev[:, 0] > 1e-10 * np.maximum(ev[:, -1], 1e-300)
        if np.any(ok):
            sol = np.linalg.solve(xtx[ok], xtg[ok])
            idx = nodes_g[ok]
            coeffs[idx] = sol
            center[idx] = cbar[ok, 0]
            scale[idx] = sc[ok]
            fit_ok[idx] = True

    def evaluate_fit(fit_node, at_point):
        local = (at_point - center[fit_node]) / scale[fit_node]
        return coeffs[fit_node, 0] + local @ coeffs[fit_node, 1:]

    def patch_average(node):
        members = patches[node]
        w = measures[members]
        return (w[:, None] * gk[members]).sum(axis=0) / w.sum()

    out = np.empty((mesh.n_nodes, dim))
    own = np.nonzero(fit_ok)[0]
    if own.size:
        local = (mesh.nodes[own] - center[own]) / scale[own, None]
        out[own] = coeffs[own, 0] + np.einsum("nd,ndc->nc", local,
                                              coeffs[own, 1:])
    rest = np.nonzero(~fit_ok)[0]
    if rest.size:
        interior = np.intersect1d(mesh.interior_nodes(), own)
        tree = cKDTree(mesh.nodes[interior]) if interior.size else None
        for n in rest:
            if sizes[n] < m and tree is not None:
                donor = interior[tree.query(mesh.nodes[n])[1]]
                out[n] = evaluate_fit(donor, mesh.nodes[n])
            else:
                out[n] = patch_average(n)
    return out


def indicator(mesh, u, estimator):
    """Per-element indicator field for the given estimator kind.

    recovery-h1 measures the element L2 norm of the difference between
    the raw gradient and the recovered one; gradient-norm measures the
    element L2 norm of the recovered gradient itself.  Both integrands
    are quadratic per element, integrated exactly through the P1 element
    mass matrix.
    """
    estimator = _coerce_estimator(estimator)
    recovered = recover_gradient(mesh, u)
    d = recovered[mesh.elements]  # (K, p, dim) nodal values per element
    if estimator is EstimatorKind.RECOVERY_H1:
        d = d - _element_gradients(mesh, u)[:, None, :]
    measures = np.asarray(element_measures(mesh), dtype=float)
    # int_tau |sum_i lambda_i d_i|^2 = ((sum d)^2 + sum d^2) * |tau| / denom
    # with the P1 mass matrix |tau| (ones+eye)/denom, denom = 6 (1D), 12 (2D)
    denom = 6.0 if mesh.dim == 1 else 12.0
    ssum = d.sum(axis=1)
    zeta_sq = (np.einsum("kd,kd->k", ssum, ssum)
               + np.einsum("kpd,kpd->k", d, d)) * measures / denom
    zeta = np.sqrt(np.maximum(zeta_sq, 0.0))
    zeta.setflags(write=False)
    return IndicatorField(values=zeta, mean=float(zeta.mean()),
                          std=float(zeta.std()))


def mark(field, config):
    """Mean-relative marking: (refine indices, coarsen indices), disjoint."""
    zeta = np.asarray(field.values)
    if zeta.size == 0:
        raise ValueError("indicator field is empty")
    refine_set = np.nonzero(zeta > config.theta_r * field.mean)[0]
    coarsen_set = np.nonzero(zeta < config.theta_c * field.mean)[0]
    return refine_set, coarsen_set


def transfer(state, old_mesh, new_mesh, params=None, ops=None):
    """Carry a solver state onto a mesh produced by refine or coarsen.

    The density field moves by P1 interpolation: surviving nodes keep
    their values, new midpoint nodes average their edge endpoints, which
    is the linear interpolant evaluated there.  The splitting field is
    recomputed on the new mesh from the transferred density so the
    discrete splitting identity stays exact; the auxiliary scalar is
    carried unchanged (when params are given, the induced mismatch of its
    square against the shifted bulk energy is logged).
    """
    if state.mesh is not old_mesh and state.mesh.tag != old_mesh.tag:
        raise ValueError("state does not live on old_mesh")
    if new_mesh is old_mesh:
        return state
    phi = FieldVector(transfer_nodal(np.asarray(state.phi), new_mesh),
                      new_mesh)
    if ops is None or ops.mesh is not new_mesh:
        ops = build_operators(new_mesh,
                              params if params is not None else
                              _params_of(ops, state))
    psi = FieldVector(ops.mass_solve(ops.B.dot(np.asarray(phi))), new_mesh)
    if params is not None:
        e1 = integrate_bulk_energy(new_mesh, phi, params)
        jump = abs(state.s**2 - e1 - params.d0)
        if jump > 0.0:
            log.debug("transfer: |s^2 - E1 - d0| = %.3g after interpolation",
                      jump)
    return SavState(mesh=new_mesh, phi=phi, psi=psi, varphi=None,
                    s=state.s, time=state.time, step_index=state.step_index)


def _params_of(ops, state):
    if ops is not None:
        return ops.params
    raise ValueError("transfer needs params or prebuilt operators")


def _adapt_event(state, ops, params, refine_set, coarsen_set, tol):
    """Coarsen, then refine, then move the state; returns the new state,
    operators, and the net element-count changes of the two passes."""
    mesh0 = state.mesh
    phi = np.asarray(state.phi)
    mesh_c = coarsen(mesh0, coarsen_set)
    if mesh_c is not mesh0:
        phi = transfer_nodal(phi, mesh_c)
        # marks were computed on mesh0; surviving elements keep their
        # predecessor index in the provenance map
        refine_set = np.nonzero(
            np.isin(mesh_c.provenance.elem_map, refine_set))[0]
    mesh_r = refine(mesh_c, refine_set)
    if mesh_r is not mesh_c:
        phi = transfer_nodal(phi, mesh_r)
    coarsened = mesh0.n_elements - mesh_c.n_elements
    refined = mesh_r.n_elements - mesh_c.n_elements
    if mesh_r is mesh0:
        return state, ops, 0, 0
    new_ops = build_operators(mesh_r, params, tol=tol)
    phi = FieldVector(phi, mesh_r)
    psi = FieldVector(new_ops.mass_solve(new_ops.B.dot(np.asarray(phi))),
                      mesh_r)
    new_state = SavState(mesh=mesh_r, phi=phi, psi=psi, varphi=None,
                         s=state.s, time=state.time,
                         step_index=state.step_index)
    return new_state, new_ops, refined, coarsened


def adapt_run(mesh, u0, params, config, tol=DEFAULT_TOL, observer=None):
    """Energy-tolerance driven time loop with on-the-fly mesh adaptation.

    Steps until the modified energy moves by no more than epsilon_e
    between consecutive steps (the first check compares against the
    initial energy magnitude, so a tolerance at or above it returns the
    initial state untouched).  After every step the indicator field of
    the new density is computed; when its standard deviation exceeds
    epsilon_sigma the mesh is coarsened then refined by the mean-relative
    marking and the state is transferred.  With epsilon_sigma = inf the
    loop degenerates to the fixed-mesh stepper.

    Returns (reports, records, final_state): energy reports per step
    (index 0 is the initial state), one adaptation-log record per step,
    and the final state (its mesh is the final mesh).  `observer(state)`
    runs after every accepted step, post-adaptation.
    """
    ops = build_operators(mesh, params, tol=tol)
    state = init_state(mesh, u0, params, ops=ops)
    reports = [energy_report(state, ops.M, params)]
    records = []
    delta = abs(reports[0].modified_energy)
    while delta > config.epsilon_e:
        if state.step_index >= config.max_steps:
            log.warning("adapt_run stopped at max_steps=%d", config.max_steps)
            break
        state = _advance(state, ops, params)
        rep = energy_report(state, ops.M, params)
        reports.append(rep)
        delta = abs(rep.modified_energy - reports[-2].modified_energy)
        field = indicator(state.mesh, state.phi, config.estimator)
        refined = coarsened = 0
        if field.std > config.epsilon_sigma:
            refine_set, coarsen_set = mark(field, config)
            state, ops, refined, coarsened = _adapt_event(
                state, ops, params, refine_set, coarsen_set, tol)
        records.append(AdaptRecord(step=state.step_index, time=state.time,
                                   n_elements=state.mesh.n_elements,
                                   sigma=field.std, refined=refined,
                                   coarsened=coarsened,
                                   modified_energy=rep.modified_energy))
        if observer is not None:
            observer(state)
    return reports, records, state
