import numpy as np
import pytest

from covforms.bundle import (
    BundleData,
    all_plaquette_holonomies,
    bundle_from_edge_table,
    check_morphism,
    gauge_transform,
    induced_end_bundle,
    plaquette_holonomy,
    pure_gauge_bundle,
    random_bundle,
    random_orthogonal_bundle,
    random_orthogonal_gauge,
    transport_path,
    trivial_bundle,
)
from covforms.calculus import Cochain, gauge_graded, inner, random_graded
from covforms.mesh import Cell, build_torus_grid


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_trivial_scalar(t2):
    b = trivial_bundle(t2, 1)
    assert b.rank == 1
    np.testing.assert_array_equal(b.transport, 1.0)


def test_trivial_rank4_holonomy(t2):
    b = trivial_bundle(t2, 4)
    for c in t2.cells(2):
        np.testing.assert_array_equal(plaquette_holonomy(b, c), np.eye(4))


def test_trivial_compatible(t3):
    assert trivial_bundle(t3, 2).compatibility_residual() == 0.0


def test_reverse_edge_is_exact_inverse(t2):
    b = random_bundle(t2, 3, seed=4)
    e = Cell((1,), (2, 3))
    M = transport_path(b, [(e, True), (e, False)])
    np.testing.assert_allclose(M, np.eye(3), atol=1e-12)
    idx = t2.index(e)
    np.testing.assert_allclose(b.transport_inv[idx] @ b.transport[idx], np.eye(3), atol=1e-12)


def test_rejects_non_spd_metric(t2):
    b = trivial_bundle(t2, 2)
    bad = np.array(b.metric)
    bad[3] = np.diag([1.0, -1.0])
    with pytest.raises(ValueError):
        BundleData(t2, 2, bad, b.transport)


def test_identity_gauge_leaves_bundle(t2):
    b = random_bundle(t2, 2, seed=1)
    g = gauge_transform(b, np.broadcast_to(np.eye(2), (t2.n_vertices, 2, 2)))
    np.testing.assert_allclose(g.transport, b.transport, atol=1e-15)
    np.testing.assert_allclose(g.metric, b.metric, atol=1e-15)


def test_orthogonal_gauge_of_trivial_is_flat(t3):
    s = random_orthogonal_gauge(t3, 3, seed=8)
    b = gauge_transform(trivial_bundle(t3, 3), s)
    for c in t3.cells(2):
        np.testing.assert_allclose(plaquette_holonomy(b, c), np.eye(3), atol=1e-12)
    assert b.compatibility_residual() < 1e-12


def test_pure_gauge_invertible_is_flat(t3):
    b = pure_gauge_bundle(t3, 2, seed=5, orthogonal=False)
    np.testing.assert_allclose(all_plaquette_holonomies(b), np.broadcast_to(np.eye(2), (t3.n_cells(2), 2, 2)), atol=1e-12)


def test_singular_gauge_rejected(t2):
    s = np.tile(np.eye(2), (t2.n_vertices, 1, 1))
    s[5] = [[1.0, 2.0], [0.5, 1.0]]
    with pytest.raises(ValueError, match="vertex 5"):
        gauge_transform(trivial_bundle(t2, 2), s)


def test_gauge_preserves_inner_products(t3):
    b = random_bundle(t3, 2, seed=2)
    s = np.eye(2) + 0.4 * np.random.default_rng(0).standard_normal((t3.n_vertices, 2, 2))
    A = random_graded(t3, b, seed=1)
    B = random_graded(t3, b, seed=2)
    bg = gauge_transform(b, s)
    lhs = inner(t3, bg, gauge_graded(t3, s, A), gauge_graded(t3, s, B))
    rhs = inner(t3, b, A, B)
    assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


def test_transport_path_empty_is_identity(t2):
    np.testing.assert_array_equal(transport_path(random_bundle(t2, 2, 0), []), np.eye(2))


def test_transport_path_rejects_gap(t2):
    b = trivial_bundle(t2, 1)
    with pytest.raises(ValueError, match="consecutive"):
        transport_path(b, [(Cell((0,), (0, 0)), True), (Cell((0,), (2, 0)), True)])


def test_transport_path_orders_product(t2):
    b = random_bundle(t2, 2, 7)
    e1, e2 = Cell((0,), (0, 0)), Cell((1,), (1, 0))
    M = transport_path(b, [(e1, True), (e2, True)])
    np.testing.assert_allclose(M, b.transport[t2.index(e2)] @ b.transport[t2.index(e1)])


def test_holonomy_explicit_product(t2):
    # rotation on axis-0 edges only, angle depending on the row
    V = t2.n_vertices
    U = np.tile(np.eye(2), (t2.n_cells(1), 1, 1))
    for v in range(V):
        x, y = t2.vertex_base(v)
        U[v] = rot(0.3 * y)
    b = BundleData(t2, 2, np.broadcast_to(np.eye(2), (V, 2, 2)), U)
    for c in t2.cells(2):
        x, y = c.base
        expected = np.eye(2).T @ rot(0.3 * ((y + 1) % 4)).T @ np.eye(2) @ rot(0.3 * y)
        np.testing.assert_allclose(plaquette_holonomy(b, c), expected, atol=1e-14)
    holo = all_plaquette_holonomies(b)
    for i, c in enumerate(t2.cells(2)):
        np.testing.assert_allclose(holo[i], plaquette_holonomy(b, c), atol=1e-14)
    # away from the wrap row the holonomy is a rotation by -0.3
    np.testing.assert_allclose(plaquette_holonomy(b, Cell((0, 1), (0, 0))), rot(-0.3), atol=1e-14)


def test_flat_closed_loop_is_identity(t2):
    b = pure_gauge_bundle(t2, 3, seed=11, orthogonal=False)
    loop = [
        (Cell((0,), (0, 0)), True), (Cell((0,), (1, 0)), True),
        (Cell((1,), (2, 0)), True), (Cell((0,), (1, 1)), False),
        (Cell((1,), (1, 1)), True), (Cell((0,), (0, 2)), False),
        (Cell((1,), (0, 1)), False), (Cell((1,), (0, 0)), False),
    ]
    np.testing.assert_allclose(transport_path(b, loop), np.eye(3), atol=1e-10)


def test_induced_end_of_trivial(t2):
    end = induced_end_bundle(trivial_bundle(t2, 2))
    assert end.rank == 4
    np.testing.assert_array_equal(end.transport, np.broadcast_to(np.eye(4), end.transport.shape))
    np.testing.assert_array_equal(end.metric, np.broadcast_to(np.eye(4), end.metric.shape))


def test_induced_end_conjugation(t2):
    b = random_bundle(t2, 3, seed=3)
    end = induced_end_bundle(b)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    for e in (0, 7, 20):
        U, Ui = b.transport[e], b.transport_inv[e]
        np.testing.assert_allclose(end.transport[e] @ A.ravel(), (U @ A @ Ui).ravel(), atol=1e-12)
        np.testing.assert_allclose(end.transport[e] @ np.eye(3).ravel(), np.eye(3).ravel(), atol=1e-12)
        np.testing.assert_allclose(end.transport_inv[e] @ end.transport[e], np.eye(9), atol=1e-12)


def test_induced_end_preserves_trace_along_paths(t2):
    b = random_bundle(t2, 3, seed=9)
    end = induced_end_bundle(b)
    rng = np.random.default_rng(1)
    for trial in range(5):
        # random lattice walk
        pos = (0, 0)
        path = []
        for _ in range(8):
            axis = int(rng.integers(2))
            fwd = bool(rng.integers(2))
            if fwd:
                path.append((Cell((axis,), pos), True))
                pos = t2.shift(pos, axis)
            else:
                prev = t2.shift(pos, axis, -1)
                path.append((Cell((axis,), prev), False))
                pos = prev
        A = rng.standard_normal((3, 3))
        moved = transport_path(end, path) @ A.ravel()
        assert np.trace(moved.reshape(3, 3)) == pytest.approx(np.trace(A), abs=1e-10)


def test_induced_end_metric(t2):
    b = random_bundle(t2, 2, seed=5)
    end = induced_end_bundle(b)
    rng = np.random.default_rng(2)
    A, B = rng.standard_normal((2, 2, 2))
    H = b.metric[4]
    expected = np.trace(A.T @ H @ B @ np.linalg.inv(H))
    assert A.ravel() @ end.metric[4] @ B.ravel() == pytest.approx(expected)


def test_edge_table_bundle(t2):
    table = np.array([[3, 0, 0, 2.0], [3, 0, 1, 1.0]])
    b = bundle_from_edge_table(t2, 2, table)
    np.testing.assert_array_equal(b.transport[3], [[2.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(b.transport[4], np.eye(2))


def test_morphism_identity(t2):
    b = random_orthogonal_bundle(t2, 2, seed=1, strength=0.4)
    samples = [Cochain(1, np.ones((t2.n_cells(1), 2)))]
    pred = lambda c: bool(np.all(np.isfinite(c.values)))
    rep = check_morphism(np.eye(2), b, b, pred, pred, samples)
    assert rep == (0.0, 0.0, True)


def test_morphism_orthogonal_isometry(t2):
    Q = rot(0.7)
    rep = check_morphism(Q, trivial_bundle(t2, 2), trivial_bundle(t2, 2))
    assert rep.isometry_residual < 1e-15
    assert rep.naturality_residual < 1e-15


@pytest.mark.parametrize("m", [1, 2, 3])
def test_morphism_scaled(t2, m):
    rep = check_morphism(2 * np.eye(m), trivial_bundle(t2, m), trivial_bundle(t2, m))
    assert rep.isometry_residual == pytest.approx(3 * np.sqrt(m), abs=1e-12)


def test_morphism_inclusion_failure(t2):
    b = trivial_bundle(t2, 1)
    samples = [Cochain(0, np.full((t2.n_vertices, 1), 0.6))]
    small = lambda c: bool(np.abs(c.values).max() < 1)
    rep = check_morphism(2 * np.eye(1), b, b, small, small, samples)
    assert rep.inclusion_ok is False


def test_morphism_rank_mismatch(t2):
    with pytest.raises(ValueError):
        check_morphism(np.eye(2), trivial_bundle(t2, 2), trivial_bundle(t2, 3))
