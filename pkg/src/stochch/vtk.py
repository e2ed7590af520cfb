"""Legacy ASCII VTK (UNSTRUCTURED_GRID) snapshots of nodal fields.

Values are written with 17 significant digits so that reading a file back
reproduces the arrays exactly.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

_TRIANGLE = 5


def _fmt(x) -> str:
    return "%.17g" % x


def write_vtk(path, mesh: Mesh, fields: dict, title: str = "stochch snapshot") -> None:
    """Write ``mesh`` and the nodal arrays in ``fields`` (name -> values)."""
    n = mesh.num_nodes
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    t = mesh.triangles
    lines.append(f"CELLS {len(t)} {4 * len(t)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in t]
    lines.append(f"CELL_TYPES {len(t)}")
    lines += [str(_TRIANGLE)] * len(t)
    if fields:
        lines.append(f"POINT_DATA {n}")
        for name, vals in fields.items():
            vals = np.asarray(getattr(vals, "values", vals), dtype=float)
            if vals.shape != (n,):
                raise ValueError(f"field {name!r} has {vals.size} values for {n} nodes")
            if " " in name:
                raise ValueError("field names must not contain spaces")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in vals]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Read a file written by :func:`write_vtk`.

    Returns
    -------
    nodes : (N, 2) array
    triangles : (T, 3) int array
    fields : dict of name -> (N,) array
    """
    with open(path) as fh:
        tok = fh.read().split("\n")
    if not tok[0].startswith("# vtk DataFile") or tok[2].strip() != "ASCII":
        raise ValueError("not a legacy ASCII VTK file")
    i = 3
    nodes = tris = None
    fields = {}
    while i < len(tok):
        head = tok[i].split()
        i += 1
        if not head:
            continue
        if head[0] == "POINTS":
            n = int(head[1])
            nodes = np.array([[float(v) for v in tok[i + r].split()[:2]] for r in range(n)])
            i += n
        elif head[0] == "CELLS":
            nc = int(head[1])
            tris = np.array([[int(v) for v in tok[i + r].split()[1:]] for r in range(nc)],
                            dtype=np.int64).reshape(nc, 3)
            i += nc
        elif head[0] == "CELL_TYPES":
            i += int(head[1])
        elif head[0] == "SCALARS":
            name = head[1]
            i += 1  # lookup table line
            fields[name] = np.array([float(v) for v in tok[i:i + len(nodes)]])
            i += len(nodes)
    return nodes, tris, fields
