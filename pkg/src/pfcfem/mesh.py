"""Conforming simplicial meshes with bisection refinement and exact coarsening.

Meshes are immutable values: ``refine`` and ``coarsen`` return new meshes and
record enough genealogy that coarsening exactly inverts refinement.

Element storage convention (2D): ``elements[k] = (v0, v1, v2)`` where the
edge ``(v1, v2)`` is the element's refinement edge and ``v0`` is the newest
vertex (the midpoint that created the element, for non-root elements).
Builders rotate root triangles so the refinement edge is the longest edge;
bisection then follows the newest-vertex rule, which keeps the number of
similarity classes finite and makes sibling pairs recognizable for
coarsening.  In 1D ``elements[k] = (a, b)`` with ``x[a] < x[b]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

_mesh_tags = itertools.count(1)


@dataclass(frozen=True)
class MeshProvenance:
    """Link from a refined/coarsened mesh back to its predecessor.

    kind       -- 'refined' or 'coarsened'.
    node_map   -- refined: (N_new, 2) int; row i gives the endpoints whose
                  midpoint is node i, in new-mesh indexing (rows (i, i) for
                  surviving nodes, which keep their index).  coarsened:
                  (N_new, 2) with rows (j, j) giving the predecessor index j
                  of each surviving node.
    elem_map   -- (K_new,) predecessor element index: the ancestor for
                  refined meshes, the left child of the merged pair (or the
                  element itself) for coarsened meshes.
    """

    kind: str
    node_map: np.ndarray
    elem_map: np.ndarray


class Mesh:
    """Conforming mesh of segments (1D) or triangles (2D)."""

    def __init__(self, nodes, elements, lineage=None, node_ids=None,
                 provenance=None, validate=True):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        if nodes.shape[1] not in (1, 2):
            raise ValueError("only 1D and 2D meshes are supported")
        if elements.ndim != 2 or elements.shape[1] != nodes.shape[1] + 1:
            raise ValueError("element array shape does not match dimension")
        self.nodes = nodes
        self.elements = elements
        self.dim = nodes.shape[1]
        # Stable per-node identities.  Coarsening renumbers node indices, so
        # genealogy records refer to nodes by id, not by index.
        if node_ids is None:
            node_ids = np.arange(nodes.shape[0], dtype=np.int64)
        self.node_ids = np.ascontiguousarray(node_ids, dtype=np.int64)
        # Per-element bisection history: tuple of (midpoint_node_id, side)
        # from the root element down, side 1 = left child, 2 = right child.
        if lineage is None:
            lineage = tuple(() for _ in range(len(elements)))
        self.lineage = tuple(lineage)
        self.provenance = provenance
        self.tag = next(_mesh_tags)
        if validate:
            self._validate()
        self.boundary_edges = self._boundary_facets()
        self.nodes.flags.writeable = False
        self.elements.flags.writeable = False
        self.node_ids.flags.writeable = False
        self._node_to_elements = None

    # -- basic queries ----------------------------------------------------

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def generation(self):
        return np.array([len(ln) for ln in self.lineage], dtype=np.int64)

    def __repr__(self):
        return "Mesh(dim=%d, nodes=%d, elements=%d)" % (
            self.dim, self.n_nodes, self.n_elements)

    def _validate(self):
        if self.n_elements == 0:
            raise ValueError("mesh has no elements")
        if self.elements.min() < 0 or self.elements.max() >= self.n_nodes:
            raise ValueError("element vertex index out of range")
        if len(self.lineage) != self.n_elements:
            raise ValueError("lineage length does not match element count")
        meas = element_measures(self)
        if np.any(meas <= 0.0):
            k = int(np.argmin(meas))
            raise ValueError(
                "element %d has non-positive measure %g" % (k, meas[k]))

    def _facets(self):
        """All element facets as an (n_el*n_facets, dim) array."""
        t = self.elements
        if self.dim == 1:
            return t.reshape(-1, 1)
        return np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])

    def _boundary_facets(self):
        fac = np.sort(self._facets(), axis=1)
        uniq, counts = np.unique(fac, axis=0, return_counts=True)
        return uniq[counts == 1]

    def node_to_elements(self):
        """List of element-index arrays, one per node (cached)."""
        if self._node_to_elements is None:
            buckets = [[] for _ in range(self.n_nodes)]
            for k, vs in enumerate(self.elements):
                for v in vs:
                    buckets[int(v)].append(k)
            self._node_to_elements = [np.array(b, dtype=np.int64)
                                      for b in buckets]
        return self._node_to_elements

    def boundary_nodes(self):
        return np.unique(self.boundary_edges)

    def interior_nodes(self):
        return np.setdiff1d(np.arange(self.n_nodes), self.boundary_nodes())

    def element_diameters(self):
        p = self.nodes
        t = self.elements
        if self.dim == 1:
            return np.abs(p[t[:, 1], 0] - p[t[:, 0], 0])
        e0 = np.linalg.norm(p[t[:, 1]] - p[t[:, 2]], axis=1)
        e1 = np.linalg.norm(p[t[:, 2]] - p[t[:, 0]], axis=1)
        e2 = np.linalg.norm(p[t[:, 0]] - p[t[:, 1]], axis=1)
        return np.maximum(e0, np.maximum(e1, e2))

    def max_diameter(self):
        return float(self.element_diameters().max())


# -- element geometry -----------------------------------------------------

@dataclass(frozen=True)
class ElementGeometry:
    """Measure and constant P1 shape-function gradients of one element."""

    measure: float
    shape_gradients: np.ndarray  # (n_vertices, dim)


def element_measures(mesh):
    """Vector of element lengths (1D) or areas (2D)."""
    p, t = mesh.nodes, mesh.elements
    if mesh.dim == 1:
        return p[t[:, 1], 0] - p[t[:, 0], 0]
    d1 = p[t[:, 1]] - p[t[:, 0]]
    d2 = p[t[:, 2]] - p[t[:, 0]]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def shape_gradients(mesh):
    """Gradients of the P1 basis on every element, shape (K, dim+1, dim)."""
    p, t = mesh.nodes, mesh.elements
    meas = element_measures(mesh)
    if mesh.dim == 1:
        g = np.empty((mesh.n_elements, 2, 1))
        g[:, 0, 0] = -1.0 / meas
        g[:, 1, 0] = 1.0 / meas
        return g
    x = p[t, 0]  # (K, 3)
    y = p[t, 1]
    g = np.empty((mesh.n_elements, 3, 2))
    two_a = 2.0 * meas
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / two_a
        g[:, i, 1] = (x[:, k] - x[:, j]) / two_a
    return g


def element_geometry(mesh, element):
    """Geometry of a single element by index."""
    if not 0 <= element < mesh.n_elements:
        raise ValueError("element index %d out of range" % element)
    meas = element_measures(mesh)[element]
    grads = shape_gradients(mesh)[element]
    return ElementGeometry(measure=float(meas), shape_gradients=grads)


# -- mesh builders --------------------------------------------------------

def build_interval_mesh(length, n_cells):
    """Uniform partition of [0, length] into n_cells segments."""
    if length <= 0.0:
        raise ValueError("interval length must be positive, got %g" % length)
    if n_cells < 1:
        raise ValueError("need at least one cell, got %d" % n_cells)
    nodes = np.linspace(0.0, length, n_cells + 1)
    elems = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    return Mesh(nodes, elems)


def regular_polygon(n_sides, radius=1.0, center=(0.0, 0.0)):
    """Vertices of a regular polygon, counterclockwise."""
    ang = 2.0 * np.pi * np.arange(n_sides) / n_sides
    return np.column_stack([center[0] + radius * np.cos(ang),
                            center[1] + radius * np.sin(ang)])


def _orient_longest_edge_first(nodes, tri):
    """Rotate (v0,v1,v2) so the refinement edge (v1,v2) is the longest edge.

    Ties are broken by the sorted node-index pair of the edge so the choice
    is deterministic.  Rotation preserves orientation.
    """
    v = list(tri)
    best = None
    for r in range(3):
        a, b = v[(r + 1) % 3], v[(r + 2) % 3]
        length = float(np.linalg.norm(nodes[a] - nodes[b]))
        key = (-length, min(a, b), max(a, b))
        if best is None or key < best[0]:
            best = (key, r)
    r = best[1]
    return (v[r], v[(r + 1) % 3], v[(r + 2) % 3])


def build_polygon_mesh(vertices, target_h):
    """Triangulate a convex polygon with max element diameter <= target_h.

    Fan triangulation from the centroid, then uniform bisection until the
    diameter target is met.  The splitting of the fourth-order problem this
    mesh feeds is only valid on convex regions, so non-convex input is
    rejected.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise ValueError("polygon needs at least 3 two-dimensional vertices")
    if target_h <= 0.0:
        raise ValueError("target_h must be positive, got %g" % target_h)
    n = verts.shape[0]
    # Normalize to counterclockwise, then require strictly convex turning.
    area2 = 0.0
    for i in range(n):
        j = (i + 1) % n
        area2 += verts[i, 0] * verts[j, 1] - verts[j, 0] * verts[i, 1]
    if area2 < 0.0:
        verts = verts[::-1].copy()
    for i in range(n):
        a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if cross <= 0.0:
            raise ValueError("polygon is not strictly convex at vertex %d" % i)

    centroid = verts.mean(axis=0)
    nodes = np.vstack([verts, centroid])
    tris = [_orient_longest_edge_first(nodes, (i, (i + 1) % n, n))
            for i in range(n)]
    mesh = Mesh(nodes, np.array(tris, dtype=np.int64))
    while mesh.max_diameter() > target_h:
        mesh = refine(mesh, range(mesh.n_elements))
    return mesh


# -- refinement -----------------------------------------------------------

class _Forest:
    """Mutable working state for one refine call."""

    def __init__(self, mesh):
        self.dim = mesh.dim
        self.nodes = [tuple(p) for p in mesh.nodes]
        self.node_parents = [(i, i) for i in range(mesh.n_nodes)]
        self.node_ids = list(mesh.node_ids)
        self.next_id = int(mesh.node_ids.max()) + 1 if len(self.node_ids) else 0
        self.verts = [tuple(int(v) for v in t) for t in mesh.elements]
        self.lineage = list(mesh.lineage)
        self.children = {}
        if self.dim == 2:
            self.edge2el = {}
            for h, t in enumerate(self.verts):
                for key in self._edge_keys(t):
                    self.edge2el.setdefault(key, set()).add(h)

    @staticmethod
    def _edge_keys(t):
        return (tuple(sorted((t[1], t[2]))), tuple(sorted((t[2], t[0]))),
                tuple(sorted((t[0], t[1]))))

    def refinement_edge(self, h):
        t = self.verts[h]
        return (t[1], t[2]) if self.dim == 2 else t

    def add_midpoint(self, a, b):
        pa, pb = self.nodes[a], self.nodes[b]
        self.nodes.append(tuple(0.5 * (x + y) for x, y in zip(pa, pb)))
        self.node_parents.append((a, b))
        self.node_ids.append(self.next_id)
        self.next_id += 1
        return len(self.nodes) - 1

    def split(self, h, m):
        """Replace element h by its two bisection children."""
        t = self.verts[h]
        if self.dim == 2:
            left = (m, t[0], t[1])
            right = (m, t[2], t[0])
        else:
            left = (t[0], m)
            right = (m, t[1])
        m_id = self.node_ids[m]
        hl = len(self.verts)
        self.verts.append(left)
        self.lineage.append(self.lineage[h] + ((m_id, 1),))
        hr = len(self.verts)
        self.verts.append(right)
        self.lineage.append(self.lineage[h] + ((m_id, 2),))
        self.children[h] = (hl, hr)
        if self.dim == 2:
            for key in self._edge_keys(t):
                self.edge2el[key].discard(h)
            for hc in (hl, hr):
                for key in self._edge_keys(self.verts[hc]):
                    self.edge2el.setdefault(key, set()).add(hc)
        return hl, hr

    def neighbor_across(self, h, key):
        for other in self.edge2el.get(key, ()):
            if other != h:
                return other
        return None

    def ensure_bisected(self, h):
        """Bisect element h, recursively bisecting neighbors for conformity."""
        if self.dim == 1:
            if h not in self.children:
                a, b = self.verts[h]
                self.split(h, self.add_midpoint(a, b))
            return
        stack = [h]
        on_stack = {h}
        while stack:
            t = stack[-1]
            if t in self.children:
                stack.pop()
                on_stack.discard(t)
                continue
            edge = self.refinement_edge(t)
            key = tuple(sorted(edge))
            nb = self.neighbor_across(t, key)
            if nb is None or tuple(sorted(self.refinement_edge(nb))) == key:
                m = self.add_midpoint(edge[0], edge[1])
                self.split(t, m)
                if nb is not None:
                    self.split(nb, m)
                stack.pop()
                on_stack.discard(t)
            else:
                if nb in on_stack:
                    raise RuntimeError(
                        "bisection closure cycle; incompatible refinement "
                        "edges in the root mesh")
                stack.append(nb)
                on_stack.add(nb)

    def emit(self, n_roots):
        """Leaves in depth-first order, left before right, per input element."""
        out_verts, out_lineage, out_root = [], [], []
        for root in range(n_roots):
            stack = [root]
            while stack:
                h = stack.pop()
                if h in self.children:
                    hl, hr = self.children[h]
                    stack.append(hr)
                    stack.append(hl)
                else:
                    out_verts.append(self.verts[h])
                    out_lineage.append(self.lineage[h])
                    out_root.append(root)
        return out_verts, out_lineage, out_root


def refine(mesh, marked):
    """Bisect the marked elements, with closure bisections for conformity.

    Returns a new conforming mesh; an empty mark set returns the input mesh
    unchanged.
    """
    marked = sorted(set(int(k) for k in marked))
    if marked and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise ValueError("marked element index out of range")
    if not marked:
        return mesh
    forest = _Forest(mesh)
    for k in marked:
        if k not in forest.children:
            forest.ensure_bisected(k)
    verts, lineage, roots = forest.emit(mesh.n_elements)
    prov = MeshProvenance(
        kind="refined",
        node_map=np.array(forest.node_parents, dtype=np.int64),
        elem_map=np.array(roots, dtype=np.int64))
    return Mesh(np.array(forest.nodes), np.array(verts, dtype=np.int64),
                lineage=lineage, node_ids=np.array(forest.node_ids),
                provenance=prov, validate=False)


# -- coarsening -----------------------------------------------------------

def _sibling_pairs(mesh, marked):
    """Merging pairs (left, right, parent_verts, parent_lineage) keyed by
    their creating midpoint node index, honoring conformity (a midpoint may
    only vanish if every element touching it merges)."""
    marked = set(int(k) for k in marked)
    id_to_index = {int(nid): i for i, nid in enumerate(mesh.node_ids)}
    by_midpoint = {}  # keyed by current node index of the creating midpoint
    for k in marked:
        ln = mesh.lineage[k]
        if ln:
            by_midpoint.setdefault(id_to_index[ln[-1][0]], []).append(k)
    n2e = mesh.node_to_elements()
    result = {}
    for m, cands in by_midpoint.items():
        lefts = [k for k in cands if mesh.lineage[k][-1][1] == 1]
        rights = [k for k in cands if mesh.lineage[k][-1][1] == 2]
        pairs = []
        for kl in lefts:
            for kr in rights:
                if mesh.lineage[kl][:-1] != mesh.lineage[kr][:-1]:
                    continue
                tl = mesh.elements[kl]
                tr = mesh.elements[kr]
                if mesh.dim == 2:
                    if tl[1] != tr[2]:
                        continue
                    parent = (int(tl[1]), int(tl[2]), int(tr[1]))
                else:
                    if tl[1] != tr[0]:
                        continue
                    parent = (int(tl[0]), int(tr[1]))
                pairs.append((kl, kr, parent, mesh.lineage[kl][:-1]))
        merged_members = set()
        for kl, kr, _, _ in pairs:
            merged_members.update((kl, kr))
        if merged_members and set(int(e) for e in n2e[m]) == merged_members:
            result[m] = pairs
    return result


def coarsen(mesh, marked):
    """Merge marked sibling pairs back into their parents.

    Only pairs whose creating midpoint is fully surrounded by marked pairs
    are merged (anything else would leave a hanging node); other marks are
    ignored.  Returns the input mesh unchanged when nothing merges.
    """
    pairs_by_mid = _sibling_pairs(mesh, marked)
    if not pairs_by_mid:
        return mesh
    drop_nodes = set(pairs_by_mid)
    merge = {}  # left -> (parent_verts, parent_lineage), right -> None
    for pairs in pairs_by_mid.values():
        for kl, kr, parent, lineage in pairs:
            merge[kl] = (parent, lineage)
            merge[kr] = None

    keep_nodes = np.array([i for i in range(mesh.n_nodes)
                           if i not in drop_nodes], dtype=np.int64)
    remap = np.full(mesh.n_nodes, -1, dtype=np.int64)
    remap[keep_nodes] = np.arange(len(keep_nodes))

    out_verts, out_lineage, out_src = [], [], []
    for k in range(mesh.n_elements):
        if k in merge:
            if merge[k] is None:
                continue
            parent, lineage = merge[k]
            out_verts.append(tuple(int(remap[v]) for v in parent))
            out_lineage.append(lineage)
        else:
            out_verts.append(tuple(int(remap[v]) for v in mesh.elements[k]))
            out_lineage.append(mesh.lineage[k])
        out_src.append(k)

    prov = MeshProvenance(
        kind="coarsened",
        node_map=np.column_stack([keep_nodes, keep_nodes]),
        elem_map=np.array(out_src, dtype=np.int64))
    return Mesh(mesh.nodes[keep_nodes], np.array(out_verts, dtype=np.int64),
                lineage=out_lineage, node_ids=mesh.node_ids[keep_nodes],
                provenance=prov, validate=False)


# -- conformity -----------------------------------------------------------

def check_conformity(mesh):
    """Verify facet incidence: interior facets shared by exactly two
    elements, boundary facets by one.  Returns True or raises ValueError."""
    fac = np.sort(mesh._facets(), axis=1)
    _, counts = np.unique(fac, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise ValueError(
            "facet shared by %d elements" % counts[counts > 2][0])
    for i, els in enumerate(mesh.node_to_elements()):
        if len(els) == 0:
            raise ValueError("orphan node %d" % i)
    return True


def transfer_nodal(values, new_mesh):
    """Carry nodal values from a mesh to its refined/coarsened successor.

    Refinement interpolates linearly (midpoint average, which is exact for
    the piecewise-linear interpolant); coarsening restricts to the surviving
    nodes.  Surviving nodes keep their values bit for bit.
    """
    prov = new_mesh.provenance
    if prov is None:
        raise ValueError("mesh has no provenance link; cannot transfer")
    values = np.asarray(values, dtype=float)
    if prov.kind == "coarsened":
        return values[prov.node_map[:, 0]].copy()
    n_old = values.shape[0]
    out = np.empty(new_mesh.n_nodes)
    out[:n_old] = values
    nm = prov.node_map
    for i in range(n_old, new_mesh.n_nodes):
        a, b = nm[i]
        out[i] = 0.5 * (out[a] + out[b])
    return out


# -- plain-text snapshot --------------------------------------------------

def write_mesh(mesh, stream):
    """Write the line-oriented mesh snapshot (bit-exact round trip)."""
    stream.write("MESH dim=%d nodes=%d elements=%d\n"
                 % (mesh.dim, mesh.n_nodes, mesh.n_elements))
    for p in mesh.nodes:
        stream.write(" ".join(repr(float(x)) for x in p) + "\n")
    for t in mesh.elements:
        stream.write(" ".join(str(int(v)) for v in t) + "\n")


def read_mesh(stream):
    """Read a mesh snapshot written by write_mesh.

    Genealogy is not part of the format, so a loaded mesh is treated as a
    root mesh (nothing is coarsenable until it is refined again).
    """
    header = stream.readline().split()
    if not header or header[0] != "MESH":
        raise ValueError("not a mesh snapshot: missing MESH header")
    fields = dict(part.split("=") for part in header[1:])
    dim = int(fields["dim"])
    n_nodes = int(fields["nodes"])
    n_elems = int(fields["elements"])
    nodes = np.array([[float(x) for x in stream.readline().split()]
                      for _ in range(n_nodes)])
    elems = np.array([[int(v) for v in stream.readline().split()]
                      for _ in range(n_elems)], dtype=np.int64)
    if nodes.shape != (n_nodes, dim) or elems.shape != (n_elems, dim + 1):
        raise ValueError("mesh snapshot is truncated or malformed")
    return Mesh(nodes, elems)
