"""Bundle-valued cochains and the covariant coboundary on a torus grid.

Cochain values are integrals of the form over each cell, one fiber vector per
cell stored at the cell's anchor.  The L2 pairing is the diagonal DEC one,

    <<A, B>> = sum_k sum_c w_k(c) A_k(c)^T H_{anchor(c)} B_k(c),

with ``w_k(c) = dual_volume(c) / primal_volume(c)``, so that pairing two
discretized smooth forms approximates the integral of ``<a, b> vol``.

The covariant coboundary of a k-cochain on a (k+1)-cell ``c`` is the signed sum
over faces, each face value carried back to ``anchor(c)``.  Near faces share the
anchor; a far face sits one step along axis ``s`` and is transported by the
inverse of the axis-``s`` edge at the anchor.  The codifferential is the exact
adjoint of this map for the pairing above.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .bundle import BundleData, all_plaquette_holonomies
from .mesh import TorusGrid, anchors, cell_weights, incidence


@dataclass(frozen=True, eq=False)
class Cochain:
    degree: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"cochain values must be 2-D (cells, fiber), got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def rank(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: Cochain) -> Cochain:
        _same_degree(self, other)
        return Cochain(self.degree, self.values + other.values)

    def __sub__(self, other: Cochain) -> Cochain:
        _same_degree(self, other)
        return Cochain(self.degree, self.values - other.values)

    def __mul__(self, c: float) -> Cochain:
        return Cochain(self.degree, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> Cochain:
        return Cochain(self.degree, -self.values)


def _same_degree(a: Cochain, b: Cochain) -> None:
    if a.degree != b.degree or a.values.shape != b.values.shape:
        raise ValueError(f"cochain mismatch: degree {a.degree} {a.values.shape} vs {b.degree} {b.values.shape}")


@dataclass(frozen=True, eq=False)
class GradedCochain:
    """Formal sum of cochains of degrees ``0..n``; missing degrees are zero."""

    n: int
    components: Mapping[int, Cochain] = field(default_factory=dict)

    def __post_init__(self):
        comps = dict(sorted(self.components.items()))
        for k, c in comps.items():
            if not 0 <= k <= self.n:
                raise ValueError(f"degree {k} outside 0..{self.n}")
            if c.degree != k:
                raise ValueError(f"component stored under degree {k} has degree {c.degree}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def of(cls, n: int, *cochains: Cochain) -> GradedCochain:
        comps: dict[int, Cochain] = {}
        for c in cochains:
            if c.degree in comps:
                raise ValueError(f"two components of degree {c.degree}")
            comps[c.degree] = c
        return cls(n, comps)

    def component(self, k: int) -> Cochain | None:
        return self.components.get(k)

    def degrees(self) -> list[int]:
        return list(self.components)

    def with_component(self, c: Cochain | None, k: int | None = None) -> GradedCochain:
        comps = dict(self.components)
        if c is None:
            comps.pop(k, None)
        else:
            comps[c.degree] = c
        return GradedCochain(self.n, comps)

    def _combine(self, other: GradedCochain, sgn: float) -> GradedCochain:
        if other.n != self.n:
            raise ValueError("graded cochains of different dimension")
        comps = dict(self.components)
        for k, c in other.components.items():
            comps[k] = comps[k] + sgn * c if k in comps else sgn * c
        return GradedCochain(self.n, comps)

    def __add__(self, other: GradedCochain) -> GradedCochain:
        return self._combine(other, 1.0)

    def __sub__(self, other: GradedCochain) -> GradedCochain:
        return self._combine(other, -1.0)

    def __mul__(self, c: float) -> GradedCochain:
        return GradedCochain(self.n, {k: c * v for k, v in self.components.items()})

    __rmul__ = __mul__

    def __neg__(self) -> GradedCochain:
        return self * -1.0

    def is_finite(self) -> bool:
        return all(np.isfinite(c.values).all() for c in self.components.values())


# -- construction --------------------------------------------------------------

def zero_cochain(grid: TorusGrid, b: BundleData, k: int) -> Cochain:
    return Cochain(k, np.zeros((grid.n_cells(k), b.rank)))


def random_cochain(grid: TorusGrid, b: BundleData, k: int, seed: int, amplitude: float = 1.0) -> Cochain:
    if not 0 <= k <= grid.n:
        raise ValueError(f"degree {k} outside 0..{grid.n}")
    rng = np.random.default_rng(seed)
    return Cochain(k, rng.uniform(-amplitude, amplitude, size=(grid.n_cells(k), b.rank)))


def random_graded(grid: TorusGrid, b: BundleData, seed: int, amplitude: float = 1.0,
                  degrees: Iterable[int] | None = None) -> GradedCochain:
    degrees = range(grid.n + 1) if degrees is None else degrees
    seeds = np.random.SeedSequence(seed).spawn(grid.n + 1)
    return GradedCochain.of(grid.n, *(
        random_cochain(grid, b, k, seeds[k].generate_state(1)[0], amplitude) for k in degrees
    ))


def hodge_weight(grid: TorusGrid, c) -> float:
    return grid.hodge_weight(c)


def _check(grid: TorusGrid, b: BundleData, alpha: Cochain) -> None:
    if b.grid != grid:
        raise ValueError("bundle lives on a different grid")
    if alpha.values.shape != (grid.n_cells(alpha.degree), b.rank):
        raise ValueError(
            f"degree-{alpha.degree} cochain has shape {alpha.values.shape}, "
            f"expected {(grid.n_cells(alpha.degree), b.rank)}"
        )


# -- pairings ------------------------------------------------------------------

def inner_k(grid: TorusGrid, b: BundleData, a: Cochain, c: Cochain) -> float:
    _check(grid, b, a)
    _check(grid, b, c)
    _same_degree(a, c)
    k = a.degree
    H = b.metric[anchors(grid, k)]
    return float(np.einsum("c,ci,cij,cj->", cell_weights(grid, k), a.values, H, c.values))


def inner(grid: TorusGrid, b: BundleData, A: GradedCochain, B: GradedCochain) -> float:
    if A.n != grid.n or B.n != grid.n:
        raise ValueError("graded cochain dimension does not match grid")
    total = 0.0
    for k in sorted(set(A.components) & set(B.components)):
        total += inner_k(grid, b, A.components[k], B.components[k])
    return total


def norm_k(grid: TorusGrid, b: BundleData, a: Cochain) -> float:
    return float(np.sqrt(max(inner_k(grid, b, a, a), 0.0)))


def norm(grid: TorusGrid, b: BundleData, A: GradedCochain) -> float:
    return float(np.sqrt(max(inner(grid, b, A, A), 0.0)))


# -- covariant coboundary and its adjoint --------------------------------------

def d_cov(grid: TorusGrid, b: BundleData, alpha: Cochain) -> Cochain:
    _check(grid, b, alpha)
    k = alpha.degree
    if k >= grid.n:
        raise ValueError(f"d_cov undefined on top degree {k}")
    inc = incidence(grid, k)
    vals = alpha.values[inc.face]  # (cells, faces, m)
    far = inc.edge >= 0
    moved = vals.copy()
    moved[far] = np.einsum("fij,fj->fi", b.transport_inv[inc.edge[far]], vals[far])
    return Cochain(k + 1, np.einsum("t,cti->ci", inc.sign, moved))


def delta_cov(grid: TorusGrid, b: BundleData, beta: Cochain) -> Cochain:
    """Adjoint of ``d_cov`` from degree k to k-1 for the weighted metric pairing."""
    _check(grid, b, beta)
    k = beta.degree
    if k < 1:
        raise ValueError("delta_cov undefined on degree 0")
    inc = incidence(grid, k - 1)
    a_up = anchors(grid, k)
    # H_{anchor(c)} beta(c) scaled by the cell weight
    hb = cell_weights(grid, k)[:, None] * np.einsum("cij,cj->ci", b.metric[a_up], beta.values)
    contrib = np.broadcast_to(hb[:, None, :], inc.face.shape + (b.rank,)).copy()
    far = inc.edge >= 0
    # transpose of U_e^{-1}
    contrib[far] = np.einsum("fji,fj->fi", b.transport_inv[inc.edge[far]], contrib[far])
    contrib *= inc.sign[None, :, None]
    acc = np.zeros((grid.n_cells(k - 1), b.rank))
    np.add.at(acc, inc.face.ravel(), contrib.reshape(-1, b.rank))
    a_dn = anchors(grid, k - 1)
    acc /= cell_weights(grid, k - 1)[:, None]
    out = np.linalg.solve(b.metric[a_dn], acc[..., None])[..., 0]
    return Cochain(k - 1, out)


def masked_d(k: int, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> GradedCochain:
    """Coboundary on every degree except ``k - 1``, whose image is dropped."""
    if not 0 <= k <= grid.n:
        raise ValueError(f"degree {k} outside 0..{grid.n}")
    out = [d_cov(grid, b, c) for i, c in gamma.components.items() if i != k - 1 and i < grid.n]
    return GradedCochain.of(grid.n, *out)


def masked_delta(k: int, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> GradedCochain:
    """Codifferential on every degree except ``k``, whose image is dropped."""
    if not 0 <= k <= grid.n:
        raise ValueError(f"degree {k} outside 0..{grid.n}")
    out = [delta_cov(grid, b, c) for i, c in gamma.components.items() if i != k and i >= 1]
    return GradedCochain.of(grid.n, *out)


def curvature_action(grid: TorusGrid, b: BundleData, alpha: Cochain) -> Cochain:
    if alpha.degree > grid.n - 2:
        raise ValueError(f"curvature action needs degree <= n - 2, got {alpha.degree}")
    return d_cov(grid, b, d_cov(grid, b, alpha))


def curvature_action_oracle_0(grid: TorusGrid, b: BundleData, f: Cochain) -> Cochain:
    """Closed form of (d_cov)^2 on 0-cochains via plaquette holonomy.

    On the plaquette at ``v`` spanning ``i < j``:
    ``(I - Hol) U_{i,v}^{-1} U_{j,v+e_i}^{-1} f(v + e_i + e_j)``.
    """
    from .mesh import shifted_vertices

    if f.degree != 0:
        raise ValueError("oracle is for 0-cochains")
    V = grid.n_vertices
    hol = all_plaquette_holonomies(b)
    out = []
    for p, (i, j) in enumerate(grid.axis_combos(2)):
        vi = shifted_vertices(grid, i)
        corner = shifted_vertices(grid, j)[vi]
        Ui_inv = b.transport_inv[i * V:(i + 1) * V]
        Uj_inv_at_vi = b.transport_inv[j * V:(j + 1) * V][vi]
        carried = np.einsum("vab,vbc,vc->va", Ui_inv, Uj_inv_at_vi, f.values[corner])
        H = hol[p * V:(p + 1) * V]
        out.append(carried - np.einsum("vab,vb->va", H, carried))
    return Cochain(2, np.concatenate(out))


# -- gauge ---------------------------------------------------------------------

def gauge_cochain(grid: TorusGrid, s: np.ndarray, alpha: Cochain) -> Cochain:
    """Express a cochain in the frame changed by ``s`` (values ``s_anchor^{-1} alpha``)."""
    a = anchors(grid, alpha.degree)
    return Cochain(alpha.degree, np.linalg.solve(np.asarray(s)[a], alpha.values[..., None])[..., 0])


def gauge_graded(grid: TorusGrid, s: np.ndarray, A: GradedCochain) -> GradedCochain:
    return GradedCochain.of(A.n, *(gauge_cochain(grid, s, c) for c in A.components.values()))
