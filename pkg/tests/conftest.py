"""Shared fixtures and independent (slow, loop-based) oracles."""
from __future__ import annotations

import numpy as np
import pytest

from covforms.bundle import transport_path
from covforms.calculus import Cochain
from covforms.mesh import Cell, build_torus_grid


@pytest.fixture
def t2():
    return build_torus_grid(2, [4, 4], [1.0, 1.0])


@pytest.fixture
def t2_aniso():
    return build_torus_grid(2, [4, 3], [2.0, 0.5])


@pytest.fixture
def t3():
    return build_torus_grid(3, [3, 3, 3], [1.0, 1.0, 1.0])


@pytest.fixture
def t4():
    return build_torus_grid(4, [3, 3, 3, 3], [1.0, 1.0, 1.0, 1.0])


def path_to_anchor(grid, face: Cell, cell: Cell):
    """Edges from anchor(face) back to anchor(cell), walking inside ``cell``."""
    face, cell = grid.normalize(face), grid.normalize(cell)
    missing = [a for a in cell.axes if a not in face.axes]
    (s,) = missing
    if face.base == cell.base:
        return []
    return [(Cell((s,), cell.base), False)]


def dense_d(grid, b, k) -> np.ndarray:
    """Matrix of the covariant coboundary assembled cell by cell from
    ``grid.boundary`` and ``transport_path``."""
    m = b.rank
    D = np.zeros((grid.n_cells(k + 1) * m, grid.n_cells(k) * m))
    for ci, c in enumerate(grid.cells(k + 1)):
        for f, sgn in grid.boundary(c):
            fi = grid.index(f)
            P = transport_path(b, path_to_anchor(grid, f, c))
            D[ci * m:(ci + 1) * m, fi * m:(fi + 1) * m] += sgn * P
    return D


def dense_mass(grid, b, k) -> np.ndarray:
    m = b.rank
    M = np.zeros((grid.n_cells(k) * m,) * 2)
    for ci, c in enumerate(grid.cells(k)):
        primal, dual = grid.volumes(c)
        v = grid.vertex_index(c.base)
        M[ci * m:(ci + 1) * m, ci * m:(ci + 1) * m] = (dual / primal) * b.metric[v]
    return M


def flat(c: Cochain) -> np.ndarray:
    return c.values.reshape(-1)


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("abc")), s)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
