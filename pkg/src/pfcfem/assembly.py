"""P1 finite element assembly: mass/stiffness matrices, nonlinear load
vectors, energy quadrature, interpolation, and point evaluation.

All quadrature is exact for the polynomial degrees that occur: products of
two P1 basis functions (degree 2), the quartic bulk density of a P1 field,
and the cubic-times-linear products in the auxiliary-variable load vector.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import quadrature
from .errors import ModelViolationError
from .mesh import element_measures, shape_gradients


class FieldVector(np.ndarray):
    """Nodal coefficient vector carrying the identity of its mesh.

    Behaves as a plain 1-D array; the ``mesh_tag`` attribute lets matrix
    and solver entry points reject fields from a different mesh.
    """

    def __new__(cls, values, mesh=None, mesh_tag=None):
        obj = np.asarray(values, dtype=float).view(cls)
        if mesh is not None:
            mesh_tag = mesh.tag
        obj.mesh_tag = mesh_tag
        return obj

    def __array_finalize__(self, obj):
        if obj is not None:
            self.mesh_tag = getattr(obj, "mesh_tag", None)


def check_compatible(mesh_tag, other):
    """Raise if `other` is a FieldVector built on a different mesh."""
    other_tag = getattr(other, "mesh_tag", None)
    if None not in (mesh_tag, other_tag) and mesh_tag != other_tag:
        raise ValueError(
            "field belongs to mesh %s, operator to mesh %s"
            % (other_tag, mesh_tag))


class SparseMatrix:
    """Compressed-row sparse operator tied to a mesh.

    Thin wrapper over a scipy CSR matrix adding the mesh tag and a symmetry
    flag; `dot` checks field/mesh compatibility.
    """

    def __init__(self, csr, mesh_tag, symmetric):
        self.csr = csr.tocsr()
        self.mesh_tag = mesh_tag
        self.symmetric = symmetric

    @property
    def n(self):
        return self.csr.shape[0]

    @property
    def shape(self):
        return self.csr.shape

    def dot(self, v):
        check_compatible(self.mesh_tag, v)
        out = self.csr.dot(np.asarray(v, dtype=float))
        return FieldVector(out, mesh_tag=self.mesh_tag)

    __matmul__ = dot

    def toarray(self):
        return self.csr.toarray()


def _local_mass(mesh):
    """Per-element mass blocks, shape (K, p, p)."""
    p = mesh.dim + 1
    meas = element_measures(mesh)
    base = (np.ones((p, p)) + np.eye(p)) / (6.0 if p == 2 else 12.0)
    return meas[:, None, None] * base


def assemble_mass(mesh, lumped=False):
    """Consistent P1 mass matrix (or its row-sum lumped diagonal variant).

    The lumped form is for experimentation only; the time stepping scheme
    and all acceptance paths use the consistent matrix.
    """
    t = mesh.elements
    p = mesh.dim + 1
    local = _local_mass(mesh)
    if lumped:
        diag = np.zeros(mesh.n_nodes)
        np.add.at(diag, t, local.sum(axis=2))
        csr = sp.diags(diag).tocsr()
        return SparseMatrix(csr, mesh.tag, symmetric=True)
    rows = np.repeat(t, p, axis=1).ravel()
    cols = np.tile(t, (1, p)).ravel()
    csr = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    return SparseMatrix(csr, mesh.tag, symmetric=True)


def assemble_stiffness(mesh):
    """P1 stiffness matrix with constants in its null space.

    Element diagonals are set to minus the sum of the off-diagonal entries,
    so each element block annihilates constants exactly in floating point;
    assembled row sums are zero up to reassociation roundoff.
    """
    t = mesh.elements
    p = mesh.dim + 1
    g = shape_gradients(mesh)
    meas = element_measures(mesh)
    local = np.einsum("kid,kjd->kij", g, g) * meas[:, None, None]
    idx = np.arange(p)
    local[:, idx, idx] = 0.0
    local[:, idx, idx] = -local.sum(axis=2)
    rows = np.repeat(t, p, axis=1).ravel()
    cols = np.tile(t, (1, p)).ravel()
    csr = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    return SparseMatrix(csr, mesh.tag, symmetric=True)


def _quad_values(mesh, values):
    """Field values at all quadrature points: (K, Q) array plus the rule."""
    bary, w = quadrature.rule_for(mesh.dim)
    vals = np.asarray(values, dtype=float)[mesh.elements]  # (K, p)
    return vals @ bary.T, bary, w


def integrate_bulk_energy(mesh, phi, params):
    """E1(phi_h): integral of the bulk density N over the domain.

    N(v) = (alpha/2) v^2 - (gamma/6) v^3 + (1/24) v^4 is quartic in the P1
    field, which the quadrature rules integrate exactly.
    """
    from .model import bulk

    vq, _, w = _quad_values(mesh, phi)
    n_vals, _, _ = bulk(vq, params)
    meas = element_measures(mesh)
    return float(meas @ (n_vals @ w))


def assemble_sav_load(mesh, phi, params):
    """Load vector q with q_j = integral of u(phi_h) eta_j.

    u(phi) = N'(phi) / sqrt(E1(phi_h) + D0) couples every entry to the
    global bulk energy through the auxiliary-variable normalization.
    """
    from .model import bulk

    e1 = integrate_bulk_energy(mesh, phi, params)
    radicand = e1 + params.d0
    if radicand <= 0.0:
        raise ModelViolationError(
            "E1 + D0 = %r is not positive; increase the SAV shift d0"
            % radicand)
    scale = 1.0 / np.sqrt(radicand)
    vq, bary, w = _quad_values(mesh, phi)
    _, nprime, _ = bulk(vq, params)
    meas = element_measures(mesh)
    contrib = nprime * (w[None, :] * scale) * meas[:, None]  # (K, Q)
    local = contrib @ bary  # (K, p)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.elements, local)
    return FieldVector(out, mesh)


def interpolate(mesh, f):
    """Nodal interpolant of a pointwise function.

    `f` takes coordinate arrays (x for 1D meshes, x and y for 2D) and may
    be either vectorized or scalar.
    """
    coords = [mesh.nodes[:, d] for d in range(mesh.dim)]
    try:
        vals = np.asarray(f(*coords), dtype=float)
        if vals.shape != (mesh.n_nodes,):
            vals = np.broadcast_to(vals, (mesh.n_nodes,)).astype(float)
    except (TypeError, ValueError):
        vals = np.array([float(f(*p)) for p in mesh.nodes])
    return FieldVector(vals, mesh)


def mass_inner(M, a, b):
    """Inner product aᵀ M b (the discrete L² pairing)."""
    return float(np.asarray(a) @ (M.dot(b)))


def l2_norm(M, a):
    """Discrete L² norm sqrt(aᵀ M a)."""
    return float(np.sqrt(max(mass_inner(M, a, a), 0.0)))


def evaluate(mesh, values, points):
    """P1 point evaluation of a nodal field at arbitrary domain points.

    Candidate elements come from a centroid KD-tree; points that fall
    outside all candidates (possible near patch boundaries) fall back to a
    full scan.  Points outside the domain raise ValueError.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != mesh.dim:
        raise ValueError("points have dimension %d, mesh has %d"
                         % (pts.shape[1], mesh.dim))
    vals = np.asarray(values, dtype=float)
    cents = mesh.nodes[mesh.elements].mean(axis=1)
    tree = cKDTree(cents)
    k = min(12, mesh.n_elements)
    _, cand = tree.query(pts, k=k)
    cand = np.atleast_2d(cand)
    out = np.empty(len(pts))
    tol = 1e-10
    for i, pt in enumerate(pts):
        lam, el = _locate(mesh, pt, cand[i], tol)
        if el is None:
            lam, el = _locate(mesh, pt, np.arange(mesh.n_elements), tol)
        if el is None:
            raise ValueError("point %s is outside the mesh" % pt)
        out[i] = float(lam @ vals[mesh.elements[el]])
    return out


def _locate(mesh, pt, candidates, tol):
    """Barycentric coordinates of pt in the first containing candidate."""
    for el in np.asarray(candidates, dtype=np.int64).ravel():
        verts = mesh.nodes[mesh.elements[el]]
        if mesh.dim == 1:
            a, b = verts[0, 0], verts[1, 0]
            h = b - a
            lam1 = (pt[0] - a) / h
            lam = np.array([1.0 - lam1, lam1])
        else:
            p0 = verts[0]
            mat = np.column_stack([verts[1] - p0, verts[2] - p0])
            rhs = pt - p0
            det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
            l1 = (mat[1, 1] * rhs[0] - mat[0, 1] * rhs[1]) / det
            l2 = (-mat[1, 0] * rhs[0] + mat[0, 0] * rhs[1]) / det
            lam = np.array([1.0 - l1 - l2, l1, l2])
        if lam.min() >= -tol:
            return np.clip(lam, 0.0, 1.0), int(el)
    return None, None
