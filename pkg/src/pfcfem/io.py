"""Result export: field snapshots, legacy VTK, CSV traces, summaries.

The snapshot format is the mesh block (same layout the mesh module reads
and writes) followed by one `FIELD <name> <count>` line and one nodal
value per line.  Floats are written with repr so a read-back is
bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .mesh import read_mesh, write_mesh


def write_field(target, mesh, values, name="phi"):
    """Write mesh plus nodal field; `target` is a path or text stream."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_nodes,):
        raise ValueError("field shape %r does not match %d nodes"
                         % (values.shape, mesh.n_nodes))
    if hasattr(target, "write"):
        _write_field_stream(target, mesh, values, name)
    else:
        with open(target, "w", encoding="utf-8") as stream:
            _write_field_stream(stream, mesh, values, name)


def _write_field_stream(stream, mesh, values, name):
    write_mesh(mesh, stream)
    stream.write("FIELD %s %d\n" % (name, values.shape[0]))
    for v in values:
        stream.write(repr(float(v)) + "\n")


def read_field(source):
    """Inverse of write_field: returns (mesh, values, name)."""
    if hasattr(source, "readline"):
        return _read_field_stream(source)
    with open(source, "r", encoding="utf-8") as stream:
        return _read_field_stream(stream)


def _read_field_stream(stream):
    mesh = read_mesh(stream)
    header = stream.readline().split()
    if len(header) != 3 or header[0] != "FIELD":
        raise ValueError("malformed FIELD header: %r" % " ".join(header))
    name, count = header[1], int(header[2])
    if count != mesh.n_nodes:
        raise ValueError("field count %d does not match %d nodes"
                         % (count, mesh.n_nodes))
    values = np.array([float(stream.readline()) for _ in range(count)])
    return mesh, values, name


def write_vtk(target, mesh, fields):
    """Legacy ASCII VTK unstructured grid with nodal scalar fields.

    `fields` maps names to nodal arrays.  1D meshes export as line cells,
    2D as triangles; coordinates are padded to three components.
    """
    if hasattr(target, "write"):
        _write_vtk_stream(target, mesh, fields)
    else:
        with open(target, "w", encoding="utf-8") as stream:
            _write_vtk_stream(stream, mesh, fields)


def _write_vtk_stream(stream, mesh, fields):
    stream.write("# vtk DataFile Version 3.0\n")
    stream.write("density field snapshot\n")
    stream.write("ASCII\n")
    stream.write("DATASET UNSTRUCTURED_GRID\n")
    stream.write("POINTS %d double\n" % mesh.n_nodes)
    coords = np.zeros((mesh.n_nodes, 3))
    coords[:, :mesh.dim] = mesh.nodes
    for row in coords:
        stream.write("%r %r %r\n"
                     % (float(row[0]), float(row[1]), float(row[2])))
    p = mesh.elements.shape[1]
    stream.write("CELLS %d %d\n" % (mesh.n_elements, mesh.n_elements * (p + 1)))
    for elem in mesh.elements:
        stream.write(" ".join([str(p)] + [str(int(v)) for v in elem]) + "\n")
    cell_type = 3 if mesh.dim == 1 else 5  # VTK_LINE / VTK_TRIANGLE
    stream.write("CELL_TYPES %d\n" % mesh.n_elements)
    for _ in range(mesh.n_elements):
        stream.write("%d\n" % cell_type)
    stream.write("POINT_DATA %d\n" % mesh.n_nodes)
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise ValueError("field %r shape %r does not match %d nodes"
                             % (name, values.shape, mesh.n_nodes))
        stream.write("SCALARS %s double 1\n" % name)
        stream.write("LOOKUP_TABLE default\n")
        for v in values:
            stream.write(repr(float(v)) + "\n")


ENERGY_HEADER = "step,time,original_energy,modified_energy,e1,s"


def write_energy_trace(target, reports):
    """CSV of per-step energy reports; row index is the step number."""
    lines = [ENERGY_HEADER]
    for step, rep in enumerate(reports):
        lines.append("%d,%r,%r,%r,%r,%r" % (
            step, rep.time, rep.original_energy, rep.modified_energy,
            rep.e1, rep.s))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as stream:
            stream.write(text)


def read_energy_trace(source):
    """Rows of the energy CSV as (step, time, original, modified, e1, s)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as stream:
            text = stream.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ENERGY_HEADER:
        raise ValueError("malformed energy trace header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append((int(parts[0]),) + tuple(float(x) for x in parts[1:]))
    return rows


ADAPT_HEADER = "step,time,n_elements,sigma,refined,coarsened,modified_energy"


def write_adapt_log(target, records):
    """CSV of adaptation records (one per accepted step)."""
    lines = [ADAPT_HEADER]
    for rec in records:
        lines.append("%d,%r,%d,%r,%d,%d,%r" % (
            rec.step, rec.time, rec.n_elements, rec.sigma,
            rec.refined, rec.coarsened, rec.modified_energy))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as stream:
            stream.write(text)


def write_summary(target, summary):
    """JSON key-value run report."""
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as stream:
            stream.write(text)
