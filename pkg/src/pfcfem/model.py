"""The Landau-Brazovskii free energy: bulk polynomial, auxiliary scalar,
and the original/modified discrete energies.

The free energy splits into a gradient part (xi^2/2)||(lap+1)phi||^2,
represented discretely through the splitting field psi, and a bulk part
E1(phi) = integral of N(phi) with the quadratic-cubic-quartic density

    N(v) = (alpha/2) v^2 - (gamma/6) v^3 + (1/24) v^4.

The auxiliary scalar s approximates sqrt(E1(phi) + D0); the modified
energy (xi^2/2)||psi||^2 + s^2 is the quantity the time discretization
dissipates unconditionally.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .assembly import integrate_bulk_energy, mass_inner
from .errors import ModelViolationError


class FlowType(enum.Enum):
    """Which gradient flow drives the dynamics."""

    L2_ALLEN_CAHN = "allen-cahn"
    HM1_CAHN_HILLIARD = "cahn-hilliard"


@dataclass(frozen=True)
class ModelParams:
    xi: float = 1.0
    alpha: float = -1.0
    gamma: float = 0.2
    d0: float = 500.0
    dt: float = 1e-2
    flow: FlowType = FlowType.L2_ALLEN_CAHN

    def __post_init__(self):
        if self.xi <= 0.0:
            raise ModelViolationError("xi must be positive, got %r" % self.xi)
        if self.dt <= 0.0:
            raise ModelViolationError("dt must be positive, got %r" % self.dt)
        if not isinstance(self.flow, FlowType):
            object.__setattr__(self, "flow", FlowType(self.flow))


@dataclass(frozen=True)
class EnergyReport:
    """Energies of one state: the original free energy uses E1, the
    modified (dissipated) energy uses s^2 in its place."""

    time: float
    original_energy: float
    modified_energy: float
    e1: float
    s: float


def bulk(phi_value, params):
    """Bulk density and its first two derivatives at a value (or array).

    Returns (N, N', N'') with
    N'  = alpha v - (gamma/2) v^2 + (1/6) v^3,
    N'' = alpha - gamma v + (1/2) v^2.
    """
    v = np.asarray(phi_value, dtype=float)
    a, g = params.alpha, params.gamma
    n = 0.5 * a * v**2 - (g / 6.0) * v**3 + (1.0 / 24.0) * v**4
    nprime = a * v - 0.5 * g * v**2 + (1.0 / 6.0) * v**3
    nsecond = a - g * v + 0.5 * v**2
    if np.isscalar(phi_value):
        return float(n), float(nprime), float(nsecond)
    return n, nprime, nsecond


def sav_init(mesh, phi0, params):
    """Initial auxiliary scalar s0 = sqrt(E1(phi0) + D0)."""
    e1 = integrate_bulk_energy(mesh, phi0, params)
    radicand = e1 + params.d0
    if radicand <= 0.0:
        raise ModelViolationError(
            "E1(phi0) + D0 = %r is not positive; raise d0 (E1 = %r)"
            % (radicand, e1))
    return float(np.sqrt(radicand))


def energy_report(state, M, params):
    """Original and modified energies of a state.

    The (lap+1)phi term is represented by the splitting field psi, which is
    exactly the quantity the discrete scheme controls.
    """
    psi_sq = mass_inner(M, state.psi, state.psi)
    grad_part = 0.5 * params.xi**2 * psi_sq
    e1 = integrate_bulk_energy(state.mesh, state.phi, params)
    return EnergyReport(
        time=state.time,
        original_energy=grad_part + e1,
        modified_energy=grad_part + state.s**2,
        e1=e1,
        s=state.s)
