"""Energy-stable finite element solver for a phase field crystal model.

Piecewise-linear finite elements on bisection-refined simplicial meshes,
with a scalar-auxiliary-variable time discretization that dissipates a
modified energy unconditionally for both the non-conserved and conserved
gradient flows of the Landau-Brazovskii free energy.
"""

__version__ = "0.1.0"
