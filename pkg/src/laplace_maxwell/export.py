"""File output: VTK legacy ASCII, CSV tables, Markdown, MatrixMarket, config files."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np
import scipy.io

from .mesh import REGION_CODES, Mesh

TABLE_HEADER = ["l", "nel", "nno", "e1", "q1", "e2", "q2"]
HISTORY_HEADER = ["iter", "nel", "ndof", "eta_interior", "eta_boundary", "data_term",
                  "estimate", "true_error", "effectivity"]


def write_vtk(path, mesh: Mesh, point_vectors=None, point_scalars=None, cell_scalars=None,
              title="laplace_maxwell"):
    """Write an unstructured grid of linear triangles (VTK cell type 5).

    Region tags are always written as integer cell data
    (1 = Omega1, 2 = Omega2, 3 = Cut).
    """
    point_vectors = point_vectors or {}
    point_scalars = point_scalars or {}
    cell_scalars = dict(cell_scalars or {})
    cell_scalars.setdefault("region", np.array([REGION_CODES[r] for r in mesh.regions]))
    out = io.StringIO()
    out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {mesh.nno} double\n")
    for x, y in mesh.nodes.tolist():
        out.write(f"{x!r} {y!r} 0\n")
    out.write(f"CELLS {mesh.nel} {4 * mesh.nel}\n")
    for a, b, c in mesh.triangles.tolist():
        out.write(f"3 {a} {b} {c}\n")
    out.write(f"CELL_TYPES {mesh.nel}\n")
    out.write("5\n" * mesh.nel)
    out.write(f"CELL_DATA {mesh.nel}\n")
    for name, vals in cell_scalars.items():
        vals = np.asarray(vals)
        kind = "int" if np.issubdtype(vals.dtype, np.integer) else "double"
        out.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
        out.write("".join(f"{v!r}\n" if kind == "double" else f"{v}\n" for v in vals.tolist()))
    if point_vectors or point_scalars:
        out.write(f"POINT_DATA {mesh.nno}\n")
    for name, vals in point_vectors.items():
        out.write(f"VECTORS {name} double\n")
        for vx, vy in np.asarray(vals, dtype=float).reshape(-1, 2).tolist():
            out.write(f"{vx!r} {vy!r} 0\n")
    for name, vals in point_scalars.items():
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        out.write("".join(f"{v!r}\n" for v in np.asarray(vals, dtype=float).tolist()))
    Path(path).write_text(out.getvalue())


def write_field_csv(path, uh):
    mesh = uh.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "y", "E1", "E2"])
        for i, ((x, y), (e1, e2)) in enumerate(zip(mesh.nodes.tolist(), uh.nodal.tolist())):
            w.writerow([i, repr(x), repr(y), repr(e1), repr(e2)])


def write_matrix_market(path, system):
    scipy.io.mmwrite(str(path), system.matrix, comment="stabilized P1 system, free dofs only")


def _sig3(v):
    return "" if v is None else f"{v:.2e}"


def _rate3(v):
    return "" if v is None else f"{v:.3g}"


def table_rows(records, raw=False):
    for r in records:
        if raw:
            fmt_e = fmt_q = (lambda v: "" if v is None else repr(float(v)))
        else:
            fmt_e, fmt_q = _sig3, _rate3
        yield [str(r.level), str(r.nel), str(r.nno), fmt_e(r.e1), fmt_q(r.q1), fmt_e(r.e2), fmt_q(r.q2)]


def write_table_csv(path, records, raw=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        w.writerows(table_rows(records, raw))


def markdown_table(records, title=None) -> str:
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| " + " | ".join(TABLE_HEADER) + " |")
    lines.append("|" + "---|" * len(TABLE_HEADER))
    for row in table_rows(records):
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def write_history_csv(path, history):
    def cell(v):
        if v is None or (isinstance(v, float) and not math.isfinite(v)):
            return ""
        return repr(v) if isinstance(v, float) else str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for s in history.steps:
            w.writerow([cell(v) for v in (s.iteration, s.nel, s.ndof, s.eta_interior, s.eta_boundary,
                                          s.data_term, s.estimate, s.true_error, s.effectivity)])


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg
