"""Pointwise structure sets (non-degenerate 2-forms, g-orthogonal almost-complex
structures) plus the covariant-constancy and integrability residuals that
recognise geometric structures on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bundle import BundleData, induced_end_bundle
from .calculus import Cochain, GradedCochain, d_cov, norm_k
from .mesh import TorusGrid, shifted_vertices


@dataclass(frozen=True, eq=False)
class TwoFormField:
    """Per-vertex antisymmetric matrix stored by its strict upper triangle (row-major)."""

    n: int
    upper: np.ndarray

    def matrices(self) -> np.ndarray:
        iu = np.triu_indices(self.n, 1)
        out = np.zeros((self.upper.shape[0], self.n, self.n))
        out[:, iu[0], iu[1]] = self.upper
        out[:, iu[1], iu[0]] = -self.upper
        return out


@dataclass(frozen=True, eq=False)
class JField:
    matrices: np.ndarray

    @property
    def n(self) -> int:
        return self.matrices.shape[1]


class NondegeneracyCheck(NamedTuple):
    ok: bool
    min_abs_det: float


class ACCheck(NamedTuple):
    ac_residual: float
    orth_residual: float


def standard_complex_structure(n: int) -> np.ndarray:
    """Block-diagonal ``[[0, -1], [1, 0]]``; needs even n."""
    if n % 2:
        raise ValueError(f"no almost-complex structure in odd dimension {n}")
    J = np.zeros((n, n))
    for a in range(0, n, 2):
        J[a, a + 1] = -1.0
        J[a + 1, a] = 1.0
    return J


def standard_symplectic_cochain(grid: TorusGrid) -> Cochain:
    """Scalar 2-cochain of ``dx^1 ^ dx^2 + dx^3 ^ dx^4 + ...`` (integrated over plaquettes)."""
    if grid.n < 2:
        raise ValueError("2-forms need n >= 2")
    V = grid.n_vertices
    vals = np.zeros((grid.n_cells(2), 1))
    for p, (i, j) in enumerate(grid.axis_combos(2)):
        if i % 2 == 0 and j == i + 1:
            vals[p * V:(p + 1) * V] = grid.spacings[i] * grid.spacings[j]
    return Cochain(2, vals)


# -- symplectic ----------------------------------------------------------------

def reconstruct_two_form(grid: TorusGrid, omega: Cochain) -> TwoFormField:
    """Vertex field from a scalar 2-cochain: average of the four incident
    plaquettes in each coordinate plane, divided by their area."""
    if grid.n < 2:
        raise ValueError("2-forms need n >= 2")
    if omega.degree != 2 or omega.rank != 1:
        raise ValueError("expected a scalar 2-cochain")
    V = grid.n_vertices
    upper = np.zeros((V, grid.n * (grid.n - 1) // 2))
    vals = omega.values[:, 0]
    # combinations order matches the row-major strict upper triangle
    for p, (i, j) in enumerate(grid.axis_combos(2)):
        plane = vals[p * V:(p + 1) * V]
        mi = shifted_vertices(grid, i, -1)
        mj = shifted_vertices(grid, j, -1)
        avg = 0.25 * (plane + plane[mi] + plane[mj] + plane[mi[mj]])
        upper[:, p] = avg / (grid.spacings[i] * grid.spacings[j])
    return TwoFormField(grid.n, upper)


def check_nondegenerate(field: TwoFormField, eps: float = 1e-6) -> NondegeneracyCheck:
    dets = np.abs(np.linalg.det(field.matrices()))
    m = float(dets.min()) if dets.size else 0.0
    if field.n % 2:
        return NondegeneracyCheck(False, m)
    return NondegeneracyCheck(bool(m >= eps), m)


# -- almost-complex structures ------------------------------------------------

def _metric_field(G, V: int, n: int) -> np.ndarray:
    if G is None:
        return np.broadcast_to(np.eye(n), (V, n, n))
    G = np.asarray(G, dtype=float)
    return np.broadcast_to(G, (V, n, n)) if G.ndim == 2 else G


def check_ac_orthogonal(J: JField, G=None) -> ACCheck:
    Jm = J.matrices
    V, n, _ = Jm.shape
    G = _metric_field(G, V, n)
    ac = np.linalg.norm(Jm @ Jm + np.eye(n), axis=(1, 2)).max()
    orth = np.linalg.norm(np.swapaxes(Jm, 1, 2) @ G @ Jm - G, axis=(1, 2)).max()
    return ACCheck(float(ac), float(orth))


def _spd_sqrt(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, Q = np.linalg.eigh(G)
    r = np.sqrt(w)
    root = (Q * r[:, None, :]) @ np.swapaxes(Q, 1, 2)
    inv_root = (Q / r[:, None, :]) @ np.swapaxes(Q, 1, 2)
    return root, inv_root


def project_ac_g(field, G=None, singular_tol: float = 1e-10) -> JField:
    """Retract per-vertex matrices onto g-orthogonal anti-involutions.

    In the orthonormal frame ``G^{1/2} J G^{-1/2}`` take the skew part and
    replace it by its orthogonal polar factor, then map back.
    """
    M = field.matrices if isinstance(field, JField) else np.asarray(field, dtype=float)
    V, n, _ = M.shape
    if n % 2:
        raise ValueError(f"no g-orthogonal anti-involution in odd dimension {n}")
    root, inv_root = _spd_sqrt(np.array(_metric_field(G, V, n)))
    Mt = root @ M @ inv_root
    S = 0.5 * (Mt - np.swapaxes(Mt, 1, 2))
    U, sv, Vt = np.linalg.svd(S)
    scale = np.maximum(sv[:, 0], 1.0)
    bad = np.flatnonzero(sv[:, -1] <= singular_tol * scale)
    if bad.size:
        raise ValueError(f"skew part is singular at vertex {int(bad[0])}; cannot project onto AC(M)_g")
    Q = U @ Vt
    return JField(inv_root @ Q @ root)


# -- covariant residuals -------------------------------------------------------

def embed_j_zero_form(J: JField) -> Cochain:
    """J as a 0-cochain of the endomorphism bundle (row-major flattening)."""
    V, n, _ = J.matrices.shape
    return Cochain(0, J.matrices.reshape(V, n * n))


def embed_j_one_form(grid: TorusGrid, J: JField) -> Cochain:
    """J as a tangent-valued 1-cochain: the axis-i edge at v carries ``h_i J(v) e_i``."""
    V, n = grid.n_vertices, grid.n
    Jm = J.matrices
    if Jm.shape != (V, n, n):
        raise ValueError(f"J field shape {Jm.shape} does not match grid")
    vals = np.concatenate([grid.spacings[i] * Jm[:, :, i] for i in range(n)])
    return Cochain(1, vals)


def recover_j_from_one_form(grid: TorusGrid, c: Cochain) -> JField:
    V, n = grid.n_vertices, grid.n
    cols = [c.values[i * V:(i + 1) * V] / grid.spacings[i] for i in range(n)]
    return JField(np.stack(cols, axis=2))


def kaehler_residual(grid: TorusGrid, tangent: BundleData, J: JField) -> float:
    end = induced_end_bundle(tangent)
    return norm_k(grid, end, d_cov(grid, end, embed_j_zero_form(J)))


def special_complex_residual(grid: TorusGrid, tangent: BundleData, J: JField) -> float:
    return one_form_residual(grid, tangent, embed_j_one_form(grid, J))


def one_form_residual(grid: TorusGrid, tangent: BundleData, c: Cochain) -> float:
    return norm_k(grid, tangent, d_cov(grid, tangent, c))


def nijenhuis_tensor(grid: TorusGrid, J: JField) -> np.ndarray:
    """``N[v, i, j] = N_J(e_i, e_j)`` at every vertex, central differences for dJ."""
    Jm = J.matrices
    n = grid.n
    D = np.stack([
        (Jm[shifted_vertices(grid, l, 1)] - Jm[shifted_vertices(grid, l, -1)]) / (2 * grid.spacings[l])
        for l in range(n)
    ])  # D[l, v] = d_l J at v
    P = np.einsum("vli,lvab->viab", Jm, D)  # derivative of J along J e_i
    Q = np.swapaxes(D, 0, 1)  # Q[v, i] = d_i J
    t1 = np.einsum("viaj->vija", P)
    t2 = np.einsum("vjai->vija", P)
    t3 = np.einsum("vab,vjbi->vija", Jm, Q)
    t4 = np.einsum("vab,vibj->vija", Jm, Q)
    return t1 - t2 + t3 - t4


def nijenhuis_residual(grid: TorusGrid, J: JField) -> float:
    N = nijenhuis_tensor(grid, J)
    return float(np.linalg.norm(N, axis=-1).max()) if N.size else 0.0


# -- projectors for the flows --------------------------------------------------

def kaehler_projector(n: int, G=None):
    def project(gamma: GradedCochain) -> GradedCochain:
        c = gamma.component(0)
        if c is None:
            return gamma
        J = project_ac_g(c.values.reshape(-1, n, n), G)
        return gamma.with_component(embed_j_zero_form(J))
    return project


def special_complex_projector(grid: TorusGrid, G=None):
    def project(gamma: GradedCochain) -> GradedCochain:
        c = gamma.component(1)
        if c is None:
            return gamma
        J = project_ac_g(recover_j_from_one_form(grid, c).matrices, G)
        return gamma.with_component(embed_j_one_form(grid, J))
    return project
