"""Quadrature rules on reference simplices.

Rules are given in barycentric coordinates with weights summing to the
reference measure fraction 1, so physical integrals are
``measure * sum(w_q * f(x_q))``.
"""

from __future__ import annotations

import numpy as np


def segment_rule():
    """Three-point Gauss-Legendre rule, exact through degree 5."""
    s = np.sqrt(0.6) / 2.0  # nodes at (1 +/- sqrt(3/5)) / 2 and 1/2
    pts = np.array([0.5 - s, 0.5, 0.5 + s])
    bary = np.column_stack([1.0 - pts, pts])
    w = np.array([5.0, 8.0, 5.0]) / 18.0
    return bary, w


def triangle_rule():
    """Six-point symmetric rule, exact through degree 4.

    Two three-point orbits; exactness through degree 4 covers the quartic
    integrands produced by products of P1 functions in the bulk density.
    """
    a1 = 0.445948490915965
    a2 = 0.091576213509771
    w1 = 0.223381589678011
    w2 = 0.109951743655322
    bary = []
    for a in (a1, a2):
        b = 1.0 - 2.0 * a
        bary.extend([(b, a, a), (a, b, a), (a, a, b)])
    w = np.array([w1] * 3 + [w2] * 3)
    return np.array(bary), w


def rule_for(dim):
    if dim == 1:
        return segment_rule()
    if dim == 2:
        return triangle_rule()
    raise ValueError("no quadrature rule for dimension %d" % dim)
