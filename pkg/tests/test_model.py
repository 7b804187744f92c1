"""Bulk polynomial, auxiliary-scalar initialization, energy reports."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfcfem.assembly import integrate_bulk_energy, interpolate
from pfcfem.errors import ModelViolationError
from pfcfem.mesh import build_interval_mesh
from pfcfem.model import (EnergyReport, FlowType, ModelParams, bulk,
                          energy_report, sav_init)


def params_1d(**kw):
    base = dict(xi=1.0, alpha=-1.0, gamma=0.2, d0=16.0, dt=2.0**-4,
                flow="allen-cahn")
    base.update(kw)
    return ModelParams(**base)


# -- bulk polynomial -------------------------------------------------------

def test_bulk_at_zero():
    n, nprime, nsecond = bulk(0.0, params_1d())
    assert (n, nprime) == (0.0, 0.0)
    assert nsecond == -1.0  # equals alpha


def test_bulk_derivative_at_one():
    # oracle by hand: N'(1) = alpha - gamma/2 + 1/6 = -1 - 0.1 + 1/6
    expect = -1.0 - 0.1 + 1.0 / 6.0
    _, nprime, _ = bulk(1.0, params_1d())
    assert nprime == pytest.approx(expect, rel=1e-15)


@given(st.floats(-4.0, 4.0), st.floats(-2.0, 0.5), st.floats(0.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_bulk_first_derivative_finite_difference(v, alpha, gamma):
    params = params_1d(alpha=alpha, gamma=gamma)
    h = 1e-5
    n_plus = bulk(v + h, params)[0]
    n_minus = bulk(v - h, params)[0]
    fd = (n_plus - n_minus) / (2.0 * h)
    _, nprime, _ = bulk(v, params)
    assert nprime == pytest.approx(fd, rel=1e-6, abs=1e-8)


@given(st.floats(-4.0, 4.0))
@settings(max_examples=100, deadline=None)
def test_bulk_second_derivative_finite_difference(v):
    params = params_1d()
    h = 1e-5
    fd = (bulk(v + h, params)[1] - bulk(v - h, params)[1]) / (2.0 * h)
    _, _, nsecond = bulk(v, params)
    assert nsecond == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_bulk_vectorized_matches_scalar():
    params = params_1d()
    vs = np.linspace(-3, 3, 13)
    n_vec, np_vec, ns_vec = bulk(vs, params)
    for i, v in enumerate(vs):
        n, nprime, nsecond = bulk(float(v), params)
        assert (n_vec[i], np_vec[i], ns_vec[i]) == (n, nprime, nsecond)


# -- parameter validation --------------------------------------------------

def test_params_flow_coercion_and_defaults():
    p = ModelParams()
    assert p.flow is FlowType.L2_ALLEN_CAHN
    assert p.dt == 1e-2 and p.xi == 1.0
    assert ModelParams(flow="cahn-hilliard").flow is FlowType.HM1_CAHN_HILLIARD


def test_params_reject_bad_values():
    with pytest.raises(ModelViolationError):
        ModelParams(xi=0.0)
    with pytest.raises(ModelViolationError):
        ModelParams(dt=-1.0)
    with pytest.raises(ValueError):
        ModelParams(flow="steepest-descent")


# -- auxiliary scalar ------------------------------------------------------

def test_sav_init_zero_field():
    mesh = build_interval_mesh(1.0, 4)
    zero = np.zeros(mesh.n_nodes)
    assert sav_init(mesh, zero, params_1d(d0=16.0)) == pytest.approx(4.0)
    assert sav_init(mesh, zero, params_1d(d0=25.0)) == pytest.approx(5.0)


def test_sav_init_exponential_setup():
    length = 4.0 * np.pi
    mesh = build_interval_mesh(length, 256)
    params = params_1d(d0=16.0)
    phi = interpolate(mesh, lambda x: np.exp(x / length))

    # oracle first: E1 via an independent high-order per-element rule on
    # the interpolant
    from pfcfem.model import bulk as bulk_fn
    x, w = np.polynomial.legendre.leggauss(8)
    e1_oracle = 0.0
    for a, b in mesh.nodes[mesh.elements, 0]:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        xs = mid + half * x
        va, vb = np.interp([a, b], mesh.nodes[:, 0], np.asarray(phi))
        vals = va + (vb - va) * (xs - a) / (b - a)
        e1_oracle += half * float(w @ bulk_fn(vals, params)[0])

    got = sav_init(mesh, phi, params)
    assert got == pytest.approx(np.sqrt(e1_oracle + 16.0), rel=1e-10)
    assert got == pytest.approx(
        np.sqrt(integrate_bulk_energy(mesh, phi, params) + 16.0), rel=1e-14)


def test_sav_init_rejects_nonpositive_radicand():
    mesh = build_interval_mesh(1.0, 4)
    params = params_1d(d0=0.05)
    with pytest.raises(ModelViolationError):
        sav_init(mesh, np.full(mesh.n_nodes, 2.0), params)


# -- energy report ---------------------------------------------------------

def test_energy_report_zero_psi():
    from pfcfem.assembly import assemble_mass
    from pfcfem.stepper import SavState
    mesh = build_interval_mesh(1.0, 4)
    M = assemble_mass(mesh)
    state = SavState(mesh=mesh, phi=np.zeros(5), psi=np.zeros(5),
                     varphi=None, s=4.0, time=0.0, step_index=0)
    rep = energy_report(state, M, params_1d())
    assert rep.modified_energy == pytest.approx(16.0)
    assert rep.original_energy == 0.0
    assert rep.e1 == 0.0


def test_energy_report_initial_gap_is_shift():
    # at t=0 with s = sqrt(E1 + D0), modified - original = D0 exactly
    from pfcfem.stepper import init_state
    length = 4.0 * np.pi
    mesh = build_interval_mesh(length, 64)
    params = params_1d(d0=16.0)
    from pfcfem.stepper import build_operators
    ops = build_operators(mesh, params)
    state = init_state(mesh, lambda x: np.exp(x / length), params, ops=ops)
    rep = energy_report(state, ops.M, params)
    assert rep.modified_energy - rep.original_energy == pytest.approx(
        16.0, abs=1e-10)


def test_energy_report_pure_function():
    from pfcfem.stepper import build_operators, init_state
    mesh = build_interval_mesh(2.0, 16)
    params = params_1d(d0=25.0)
    ops = build_operators(mesh, params)
    state = init_state(mesh, lambda x: np.cos(x), params, ops=ops)
    a = energy_report(state, ops.M, params)
    b = energy_report(state, ops.M, params)
    assert a == b == EnergyReport(a.time, a.original_energy,
                                  a.modified_energy, a.e1, a.s)


def test_energy_gap_drift_shrinks_with_dt():
    # |modified - original - D0| along a run is O(dt): halving dt should
    # roughly halve the worst drift
    from pfcfem.stepper import Schedule, build_operators, init_state, run
    length = 4.0 * np.pi
    mesh = build_interval_mesh(length, 64)

    def worst_drift(dt):
        params = params_1d(d0=16.0, dt=dt)
        ops = build_operators(mesh, params)
        state = init_state(mesh, lambda x: np.exp(x / length), params,
                           ops=ops)
        reports, _ = run(state, params, Schedule(t_end=0.5), ops=ops)
        return max(abs(r.modified_energy - r.original_energy - 16.0)
                   for r in reports)

    coarse = worst_drift(2.0**-5)
    fine = worst_drift(2.0**-6)
    assert fine <= 0.75 * coarse
    assert coarse < 1.0  # drift stays bounded on this horizon


def test_small_radicand_draws_warning(caplog):
    import logging
    from pfcfem.stepper import build_operators, init_state
    length = 4.0 * np.pi
    mesh = build_interval_mesh(length, 64)
    params = params_1d(d0=16.0)  # E1 is about -15.7 for this profile
    ops = build_operators(mesh, params)
    with caplog.at_level(logging.WARNING, logger="pfcfem.stepper"):
        init_state(mesh, lambda x: np.exp(x / length), params, ops=ops)
    assert any("d0" in rec.message for rec in caplog.records)


def test_params_frozen():
    p = params_1d()
    with pytest.raises(dataclasses.FrozenInstanceError):
        p.dt = 0.5
