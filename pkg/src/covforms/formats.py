"""Columnar text formats for cochains, matrix fields and edge transports.

All files are comma-separated with a one-line header.  Rows are written in a
deterministic order (degree, then cell index in ``(axes, base)`` lexicographic
order, then fiber index), and floats use ``repr`` so a dump round-trips
bit-exactly.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .calculus import Cochain, GradedCochain
from .mesh import TorusGrid

COCHAIN_HEADER = "degree,cell,fiber,value"
FIELD_HEADER = "vertex,row,col,value"
EDGE_HEADER = "edge,row,col,value"


def write_cochains(path: str | Path, gamma: GradedCochain | Cochain) -> None:
    comps = [gamma] if isinstance(gamma, Cochain) else list(gamma.components.values())
    lines = [COCHAIN_HEADER]
    for c in comps:
        for cell, row in enumerate(c.values):
            for f, x in enumerate(row):
                lines.append(f"{c.degree},{cell},{f},{float(x)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_table(path: str | Path, header: str) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != header:
        raise ValueError(f"{path}: expected header {header!r}")
    rows = [ln for ln in text[1:] if ln.strip()]
    if not rows:
        return np.zeros((0, 4))
    return np.loadtxt(rows, delimiter=",", ndmin=2)


def read_cochains(path: str | Path, grid: TorusGrid, rank: int) -> GradedCochain:
    table = _read_table(path, COCHAIN_HEADER)
    comps = {}
    for k in sorted({int(d) for d in table[:, 0]}):
        if not 0 <= k <= grid.n:
            raise ValueError(f"{path}: degree {k} outside 0..{grid.n}")
        rows = table[table[:, 0] == k]
        vals = np.zeros((grid.n_cells(k), rank))
        cell, fib = rows[:, 1].astype(int), rows[:, 2].astype(int)
        if cell.max() >= grid.n_cells(k) or fib.max() >= rank or min(cell.min(), fib.min()) < 0:
            raise ValueError(f"{path}: index out of range for degree {k}")
        vals[cell, fib] = rows[:, 3]
        comps[k] = Cochain(k, vals)
    return GradedCochain(grid.n, comps)


def write_matrix_field(path: str | Path, matrices: np.ndarray) -> None:
    lines = [FIELD_HEADER]
    for v, M in enumerate(np.asarray(matrices)):
        for r, row in enumerate(M):
            for c, x in enumerate(row):
                lines.append(f"{v},{r},{c},{float(x)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_field(path: str | Path, n_vertices: int, n: int) -> np.ndarray:
    table = _read_table(path, FIELD_HEADER)
    out = np.zeros((n_vertices, n, n))
    if table.size:
        v, r, c = (table[:, i].astype(int) for i in range(3))
        out[v, r, c] = table[:, 3]
    return out


def read_edge_table(path: str | Path) -> np.ndarray:
    return _read_table(path, EDGE_HEADER)
