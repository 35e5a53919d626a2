"""Periodic cubical complex on the flat torus T^n.

Cells are axis-aligned unit boxes of the grid.  A k-cell is identified by the
ordered tuple of axes it spans and the multi-index of its minimal corner (the
*anchor*), which is also where bundle fibers are attached.

Cells of degree k are enumerated lexicographically by ``(axes, base)`` with the
base multi-index raveled in C order, so the flat index of a cell is
``combo_index * n_vertices + vertex_index``.

Boundary orientation: for a cell spanning axes ``s_0 < ... < s_{k-1}`` the face
that omits ``s_j`` on the far side (base shifted by ``e_{s_j}``) carries sign
``(-1)**j`` and the near face carries ``(-1)**(j+1)``.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np


class Cell(NamedTuple):
    axes: tuple[int, ...]
    base: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.axes)


@dataclass(frozen=True)
class TorusGrid:
    n: int
    sizes: tuple[int, ...]
    spacings: tuple[float, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if len(self.sizes) != self.n or len(self.spacings) != self.n:
            raise ValueError("sizes and spacings must have one entry per axis")
        for i, N in enumerate(self.sizes):
            if N < 3:
                raise ValueError(
                    f"axis {i}: size {N} < 3; N_i >= 3 is required so that "
                    "wrap-around never identifies distinct faces"
                )
        for i, h in enumerate(self.spacings):
            if not h > 0:
                raise ValueError(f"axis {i}: spacing must be positive, got {h}")

    # -- counting -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return math.prod(self.sizes)

    def axis_combos(self, k: int) -> list[tuple[int, ...]]:
        return list(itertools.combinations(range(self.n), k))

    def n_cells(self, k: int) -> int:
        if not 0 <= k <= self.n:
            return 0
        return math.comb(self.n, k) * self.n_vertices

    @property
    def total_volume(self) -> float:
        return math.prod(N * h for N, h in zip(self.sizes, self.spacings))

    # -- enumerate / locate ---------------------------------------------------
    def vertex_index(self, base: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(b) % N for b, N in zip(base, self.sizes)), self.sizes))

    def vertex_base(self, v: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(v, self.sizes))

    def cell(self, k: int, index: int) -> Cell:
        self._check_degree(k)
        combo, v = divmod(int(index), self.n_vertices)
        return Cell(self.axis_combos(k)[combo], self.vertex_base(v))

    def index(self, c: Cell) -> int:
        axes = tuple(c.axes)
        if list(axes) != sorted(set(axes)) or any(not 0 <= a < self.n for a in axes):
            raise ValueError(f"invalid axes {axes}")
        combo = _combo_lookup(self.n, len(axes))[axes]
        return combo * self.n_vertices + self.vertex_index(c.base)

    def cells(self, k: int) -> Iterator[Cell]:
        for i in range(self.n_cells(k)):
            yield self.cell(k, i)

    def normalize(self, c: Cell) -> Cell:
        return Cell(tuple(c.axes), tuple(int(b) % N for b, N in zip(c.base, self.sizes)))

    def anchor(self, c: Cell) -> tuple[int, ...]:
        return self.normalize(c).base

    def shift(self, base: Sequence[int], axis: int, step: int = 1) -> tuple[int, ...]:
        out = list(base)
        out[axis] = (out[axis] + step) % self.sizes[axis]
        return tuple(out)

    # -- geometry -------------------------------------------------------------
    def boundary(self, c: Cell) -> list[tuple[Cell, int]]:
        """Signed faces of ``c``; empty for vertices."""
        c = self.normalize(c)
        faces = []
        for j, s in enumerate(c.axes):
            rest = c.axes[:j] + c.axes[j + 1:]
            faces.append((Cell(rest, self.shift(c.base, s)), (-1) ** j))
            faces.append((Cell(rest, c.base), (-1) ** (j + 1)))
        return faces

    def volumes(self, c: Cell) -> tuple[float, float]:
        """(primal, dual) volume of a cell under the flat metric."""
        primal = math.prod(self.spacings[i] for i in c.axes)
        dual = math.prod(self.spacings[i] for i in range(self.n) if i not in c.axes)
        return float(primal), float(dual)

    def hodge_weight(self, c: Cell) -> float:
        primal, dual = self.volumes(c)
        return dual / primal

    def _check_degree(self, k: int) -> None:
        if not 0 <= k <= self.n:
            raise ValueError(f"degree {k} outside 0..{self.n}")


def build_torus_grid(n: int, sizes: Sequence[int], spacings: Sequence[float]) -> TorusGrid:
    return TorusGrid(int(n), tuple(int(s) for s in sizes), tuple(float(h) for h in spacings))


@functools.lru_cache(maxsize=None)
def _combo_lookup(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {c: i for i, c in enumerate(itertools.combinations(range(n), k))}


# -- vectorized tables ---------------------------------------------------------
# Grids are immutable and hashable, so tables are cached per (grid, degree).

@functools.lru_cache(maxsize=64)
def anchors(grid: TorusGrid, k: int) -> np.ndarray:
    """Vertex index of the anchor of every k-cell, in enumeration order."""
    grid._check_degree(k)
    V = grid.n_vertices
    out = np.tile(np.arange(V), math.comb(grid.n, k))
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def cell_weights(grid: TorusGrid, k: int) -> np.ndarray:
    """Diagonal Hodge weight (dual / primal volume) of every k-cell."""
    grid._check_degree(k)
    w = []
    for axes in grid.axis_combos(k):
        primal, dual = grid.volumes(Cell(axes, (0,) * grid.n))
        w.append(np.full(grid.n_vertices, dual / primal))
    out = np.concatenate(w)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def shifted_vertices(grid: TorusGrid, axis: int, step: int = 1) -> np.ndarray:
    """Index of ``v + step * e_axis`` for every vertex ``v``."""
    idx = np.arange(grid.n_vertices).reshape(grid.sizes)
    out = np.roll(idx, -step, axis=axis).ravel()
    out.setflags(write=False)
    return out


class Incidence(NamedTuple):
    """Coboundary table from k-cells to (k+1)-cells.

    ``face[c, t]`` is the t-th face of (k+1)-cell ``c`` with sign ``sign[t]``.
    ``edge[c, t]`` is the axis-edge at the anchor of ``c`` whose inverse
    transport carries the face's fiber back to the anchor, or -1 when the face
    shares the anchor.
    """

    face: np.ndarray
    sign: np.ndarray
    edge: np.ndarray


@functools.lru_cache(maxsize=64)
def incidence(grid: TorusGrid, k: int) -> Incidence:
    if not 0 <= k < grid.n:
        raise ValueError(f"no coboundary from degree {k} on T^{grid.n}")
    V = grid.n_vertices
    verts = np.arange(V)
    lookup = _combo_lookup(grid.n, k)
    faces, edges = [], []
    signs = None
    for axes in grid.axis_combos(k + 1):
        cols_f, cols_e, sg = [], [], []
        for j, s in enumerate(axes):
            rest = lookup[axes[:j] + axes[j + 1:]]
            cols_f.append(rest * V + shifted_vertices(grid, s))
            cols_e.append(s * V + verts)
            sg.append((-1) ** j)
            cols_f.append(rest * V + verts)
            cols_e.append(np.full(V, -1))
            sg.append((-1) ** (j + 1))
        faces.append(np.stack(cols_f, axis=1))
        edges.append(np.stack(cols_e, axis=1))
        signs = np.array(sg, dtype=float)
    table = Incidence(np.concatenate(faces), signs, np.concatenate(edges))
    for a in table:
        a.setflags(write=False)
    return table
