"""Vector bundles over a torus grid as lattice-gauge data.

A rank-m bundle carries an SPD fiber metric ``H_v`` at every vertex and an
invertible parallel transport ``U_e`` on every positively oriented edge.  ``U_e``
maps the fiber at the tail (the edge anchor) to the fiber at the head
(anchor shifted one step along the edge axis); the reversed edge uses the
stored inverse, so ``U_{-e} = U_e^{-1}`` holds bit-for-bit.

The induced endomorphism bundle (fibers are m x m matrices, flattened row-major)
has transport ``A -> U A U^{-1}`` and metric ``<A, B> = tr(A^T H B H^{-1})``,
which is ``kron(H, H^{-1})`` on flattened fibers and reduces to the Frobenius
pairing when ``H = I``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.linalg import expm

from .mesh import Cell, TorusGrid, shifted_vertices


@dataclass(frozen=True, eq=False)
class BundleData:
    grid: TorusGrid
    rank: int
    metric: np.ndarray
    transport: np.ndarray
    transport_inv: np.ndarray = field(default=None)

    def __post_init__(self):
        V, E, m = self.grid.n_vertices, self.grid.n_cells(1), self.rank
        if m < 1:
            raise ValueError(f"rank must be >= 1, got {m}")
        metric = np.array(self.metric, dtype=float)
        transport = np.array(self.transport, dtype=float)
        if metric.shape != (V, m, m):
            raise ValueError(f"metric shape {metric.shape} != {(V, m, m)}")
        if transport.shape != (E, m, m):
            raise ValueError(f"transport shape {transport.shape} != {(E, m, m)}")
        if not np.allclose(metric, np.swapaxes(metric, 1, 2), rtol=0, atol=1e-12):
            raise ValueError("fiber metric is not symmetric")
        if np.linalg.eigvalsh(metric).min() <= 0:
            raise ValueError("fiber metric is not positive definite")
        inv = self.transport_inv
        inv = np.linalg.inv(transport) if inv is None else np.array(inv, dtype=float)
        for a in (metric, transport, inv):
            a.setflags(write=False)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "transport", transport)
        object.__setattr__(self, "transport_inv", inv)

    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """(tail, head) vertex index of every positively oriented edge."""
        V = self.grid.n_vertices
        tails = np.tile(np.arange(V), self.grid.n)
        heads = np.concatenate([shifted_vertices(self.grid, i) for i in range(self.grid.n)])
        return tails, heads

    def compatibility_residual(self) -> float:
        """max_e || U_e^T H_head U_e - H_tail ||_F."""
        tails, heads = self.edge_endpoints()
        U = self.transport
        lhs = np.swapaxes(U, 1, 2) @ self.metric[heads] @ U
        return float(np.linalg.norm(lhs - self.metric[tails], axis=(1, 2)).max())

    def is_metric_compatible(self, tol: float = 1e-10) -> bool:
        return self.compatibility_residual() <= tol


class MorphismReport(NamedTuple):
    naturality_residual: float
    isometry_residual: float
    inclusion_ok: bool


# -- constructors --------------------------------------------------------------

def trivial_bundle(grid: TorusGrid, m: int) -> BundleData:
    eye = np.eye(m)
    return BundleData(
        grid,
        m,
        np.broadcast_to(eye, (grid.n_vertices, m, m)),
        np.broadcast_to(eye, (grid.n_cells(1), m, m)),
        np.broadcast_to(eye, (grid.n_cells(1), m, m)),
    )


def _random_skew(rng: np.random.Generator, count: int, m: int) -> np.ndarray:
    a = rng.standard_normal((count, m, m))
    return 0.5 * (a - np.swapaxes(a, 1, 2))


def random_orthogonal_gauge(grid: TorusGrid, m: int, seed: int) -> np.ndarray:
    """Per-vertex Haar-ish orthogonal matrices (QR of Gaussian, sign-fixed)."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((grid.n_vertices, m, m)))
    return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]


def random_invertible_gauge(grid: TorusGrid, m: int, seed: int, strength: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.eye(m) + strength * rng.standard_normal((grid.n_vertices, m, m))


def random_orthogonal_bundle(grid: TorusGrid, m: int, seed: int, strength: float) -> BundleData:
    """Identity metric with transports ``expm(strength * A_e)``, A_e random skew.

    Metric-compatible, and non-flat for generic seeds once ``m >= 2``.
    """
    rng = np.random.default_rng(seed)
    gens = _random_skew(rng, grid.n_cells(1), m) * strength
    U = np.stack([expm(g) for g in gens])
    return BundleData(grid, m, np.broadcast_to(np.eye(m), (grid.n_vertices, m, m)), U)


def pure_gauge_bundle(grid: TorusGrid, m: int, seed: int, orthogonal: bool = True) -> BundleData:
    """Gauge transform of the trivial bundle (flat, trivial holonomy)."""
    if orthogonal:
        s = random_orthogonal_gauge(grid, m, seed)
    else:
        s = random_invertible_gauge(grid, m, seed)
    return gauge_transform(trivial_bundle(grid, m), s)


def random_bundle(grid: TorusGrid, m: int, seed: int, strength: float = 0.3) -> BundleData:
    """Random SPD metrics and transports ``expm(strength * G_e)`` with Gaussian
    ``G_e``; well conditioned but not metric-compatible."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((grid.n_vertices, m, m))
    metric = np.eye(m) + 0.5 * a @ np.swapaxes(a, 1, 2) / m
    gens = strength * rng.standard_normal((grid.n_cells(1), m, m))
    U = np.stack([expm(g) for g in gens])
    U_inv = np.stack([expm(-g) for g in gens])
    return BundleData(grid, m, metric, U, U_inv)


def bundle_from_edge_table(grid: TorusGrid, m: int, table: np.ndarray) -> BundleData:
    """Identity metric with explicit transports from rows ``(edge id, row, col, value)``.

    Entries not listed default to the identity matrix.
    """
    U = np.tile(np.eye(m), (grid.n_cells(1), 1, 1))
    table = np.atleast_2d(np.asarray(table, dtype=float))
    if table.size:
        if table.shape[1] != 4:
            raise ValueError("edge table needs 4 columns: edge id, row, col, value")
        e, r, c = (table[:, i].astype(int) for i in range(3))
        if e.min() < 0 or e.max() >= grid.n_cells(1) or r.max() >= m or c.max() >= m or min(r.min(), c.min()) < 0:
            raise ValueError("edge table index out of range")
        U[e, r, c] = table[:, 3]
    return BundleData(grid, m, np.broadcast_to(np.eye(m), (grid.n_vertices, m, m)), U)


# -- operations ----------------------------------------------------------------

def gauge_transform(b: BundleData, s: np.ndarray, max_cond: float = 1e12) -> BundleData:
    """Change of frame ``s_v`` at every vertex.

    ``U'_e = s_head^{-1} U_e s_tail`` and ``H'_v = s_v^T H_v s_v``; cochain
    values transform as ``s_anchor^{-1} alpha`` (see ``calculus.gauge_cochain``).
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (b.grid.n_vertices, b.rank, b.rank):
        raise ValueError(f"gauge shape {s.shape} does not match bundle")
    cond = np.linalg.cond(s)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > max_cond))
    if bad.size:
        raise ValueError(f"singular gauge at vertex {int(bad[0])} (condition number {cond[bad[0]]:.3g})")
    s_inv = np.linalg.inv(s)
    tails, heads = b.edge_endpoints()
    U = s_inv[heads] @ b.transport @ s[tails]
    U_inv = s_inv[tails] @ b.transport_inv @ s[heads]
    H = np.swapaxes(s, 1, 2) @ b.metric @ s
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    return BundleData(b.grid, b.rank, H, U, U_inv)


def _edge_endpoints(grid: TorusGrid, edge: Cell, forward: bool) -> tuple[tuple[int, ...], tuple[int, ...]]:
    edge = grid.normalize(edge)
    if edge.degree != 1:
        raise ValueError(f"{edge} is not an edge")
    a, b = edge.base, grid.shift(edge.base, edge.axes[0])
    return (a, b) if forward else (b, a)


def transport_path(b: BundleData, path: Sequence[tuple[Cell, bool]]) -> np.ndarray:
    """Ordered product ``U_{e_L} ... U_{e_1}`` along oriented edges ``(edge, forward)``."""
    grid = b.grid
    out = np.eye(b.rank)
    prev_head = None
    for edge, forward in path:
        tail, head = _edge_endpoints(grid, edge, forward)
        if prev_head is not None and tail != prev_head:
            raise ValueError(f"path is not consecutive: edge starting at {tail} follows one ending at {prev_head}")
        idx = grid.index(edge)
        out = (b.transport[idx] if forward else b.transport_inv[idx]) @ out
        prev_head = head
    return out


def plaquette_path(grid: TorusGrid, c: Cell) -> list[tuple[Cell, bool]]:
    """Loop ``v -> v+e_i -> v+e_i+e_j -> v+e_j -> v`` around a 2-cell."""
    c = grid.normalize(c)
    if c.degree != 2:
        raise ValueError(f"{c} is not a 2-cell")
    i, j = c.axes
    v = c.base
    return [
        (Cell((i,), v), True),
        (Cell((j,), grid.shift(v, i)), True),
        (Cell((i,), grid.shift(v, j)), False),
        (Cell((j,), v), False),
    ]


def plaquette_holonomy(b: BundleData, c: Cell) -> np.ndarray:
    return transport_path(b, plaquette_path(b.grid, c))


def all_plaquette_holonomies(b: BundleData) -> np.ndarray:
    """Holonomy of every 2-cell in enumeration order, shape (n_2cells, m, m)."""
    grid = b.grid
    V = grid.n_vertices
    out = []
    for i, j in grid.axis_combos(2):
        Ui = b.transport[i * V:(i + 1) * V]
        Uj = b.transport[j * V:(j + 1) * V]
        Ui_inv = b.transport_inv[i * V:(i + 1) * V]
        Uj_inv = b.transport_inv[j * V:(j + 1) * V]
        out.append(Uj_inv @ Ui_inv[shifted_vertices(grid, j)] @ Uj[shifted_vertices(grid, i)] @ Ui)
    return np.concatenate(out)


def induced_end_bundle(b: BundleData) -> BundleData:
    """End(E) = E* (x) E with conjugation transport and the induced metric."""
    m = b.rank
    Hinv = np.linalg.inv(b.metric)
    metric = np.einsum("vik,vjl->vijkl", b.metric, Hinv).reshape(-1, m * m, m * m)
    metric = 0.5 * (metric + np.swapaxes(metric, 1, 2))
    U, Ui = b.transport, b.transport_inv
    # vec(U A U^{-1}) = kron(U, U^{-T}) vec(A) for row-major vec
    T = np.einsum("eik,elj->eijkl", U, Ui).reshape(-1, m * m, m * m)
    T_inv = np.einsum("eik,elj->eijkl", Ui, U).reshape(-1, m * m, m * m)
    return BundleData(b.grid, m * m, metric, T, T_inv)


def check_morphism(
    sigma: np.ndarray,
    bE: BundleData,
    bF: BundleData,
    U_pred: Callable | None = None,
    V_pred: Callable | None = None,
    samples: Sequence = (),
) -> MorphismReport:
    """Test a candidate bundle map ``sigma_v : E_v -> F_v`` against the three
    morphism conditions: commuting with transports, pulling ``h_F`` back to
    ``h_E``, and carrying samples accepted by ``U_pred`` into ``V_pred``.
    """
    from .calculus import Cochain
    from .mesh import anchors

    if bE.grid != bF.grid:
        raise ValueError("bundles live on different grids")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 2:
        sigma = np.broadcast_to(sigma, (bE.grid.n_vertices,) + sigma.shape)
    if sigma.shape != (bE.grid.n_vertices, bF.rank, bE.rank):
        raise ValueError(f"sigma shape {sigma.shape} incompatible with ranks E={bE.rank}, F={bF.rank}")
    tails, heads = bE.edge_endpoints()
    nat = sigma[heads] @ bE.transport - bF.transport @ sigma[tails]
    iso = np.swapaxes(sigma, 1, 2) @ bF.metric @ sigma - bE.metric
    inclusion_ok = True
    for alpha in samples:
        if U_pred is not None and not U_pred(alpha):
            continue
        a = anchors(bE.grid, alpha.degree)
        image = Cochain(alpha.degree, np.einsum("cij,cj->ci", sigma[a], alpha.values))
        if V_pred is not None and not V_pred(image):
            inclusion_ok = False
            break
    return MorphismReport(
        float(np.linalg.norm(nat, axis=(1, 2)).max()),
        float(np.linalg.norm(iso, axis=(1, 2)).max()),
        inclusion_ok,
    )
