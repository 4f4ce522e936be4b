import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import csgraph, csr_matrix

from geotex import geodesics
from geotex.errors import InputError
from geotex.geodesics import (FROZEN, available_backends, build_table, dijkstra, fast_march, path_length,
                              seed_ball, sweep)
from geotex.meshing import SurfaceMesh, grid_vertex, plane_grid

BACKENDS = available_backends()

# frozen from this implementation (4-edge seed ball); exact value is k * sqrt(2)
FMM_DIAGONAL = {8: 11.705851104939393, 16: 23.238422309050595, 32: 46.09009737029901}


def bumpy_grid(k, seed, amp=0.6, jitter=0.2):
    rng = np.random.default_rng(seed)
    m = plane_grid(k)
    v = m.vertices.copy()
    v[:, :2] += rng.uniform(-jitter, jitter, (len(v), 2))
    v[:, 2] = amp * np.sin(v[:, 0] * rng.uniform(0.2, 0.6)) * np.cos(v[:, 1] * rng.uniform(0.2, 0.6))
    return SurfaceMesh(v, m.faces)


def test_path_length_examples():
    assert path_length([(0, 0, 0)]) == 0.0
    assert path_length([(0, 0, 0), (1, 0, 0), (1, 1, 0)]) == 2.0
    assert path_length([(0, 0, 0), (3, 4, 0)]) == 5.0
    with pytest.raises(InputError):
        path_length([])


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_triangle_one_hop(backend):
    mesh = SurfaceMesh(np.array([[0, 0, 0], [3, 4, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
    for solver in ("fmm", "dijkstra"):
        f = sweep(mesh, 0, solver, backend=backend, seed_radius=0)
        assert f.action[0] == 0.0
        assert f.action[1] == 5.0


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k", [8, 16, 32])
def test_fmm_plane_diagonal(backend, k):
    mesh = plane_grid(k)
    f = fast_march(mesh, grid_vertex(k, 0, 0), backend=backend)
    diag = f.action[grid_vertex(k, k, k)]
    assert diag == FMM_DIAGONAL[k]
    assert diag >= k * np.sqrt(2)
    assert abs(f.action[grid_vertex(k, k, 0)] - k) <= 1e-9
    assert abs(f.action[grid_vertex(k, 0, k)] - k) <= 1e-9


def test_fmm_diagonal_error_decreases_under_refinement():
    err = [FMM_DIAGONAL[k] / (k * np.sqrt(2)) - 1 for k in (8, 16, 32)]
    assert err[0] > err[1] > err[2]
    assert err[2] <= 0.02


def test_dijkstra_plane_against_split_diagonal():
    k = 10
    mesh = plane_grid(k)
    d = dijkstra(mesh, grid_vertex(k, 0, 0)).action
    # the (0,0)-(k,k) diagonal runs across every quad split: staircase length
    assert d[grid_vertex(k, k, k)] == 2 * k
    # the other diagonal runs along the split edges
    d2 = dijkstra(mesh, grid_vertex(k, 0, k)).action
    assert abs(d2[grid_vertex(k, k, 0)] - k * np.sqrt(2)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_dijkstra_matches_graph_oracle(seed):
    mesh = bumpy_grid(12, seed)
    ptr, idx, w = mesh.neighbors
    g = csr_matrix((w, idx, ptr), shape=(mesh.n_vertices,) * 2)
    ref = csgraph.dijkstra(g, indices=7)
    np.testing.assert_allclose(dijkstra(mesh, 7).action, ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_dominance_dijkstra_fmm_chord(seed):
    mesh = bumpy_grid(14, seed)
    src = 3 + seed * 11
    dj = dijkstra(mesh, src).action
    fm = fast_march(mesh, src).action
    chord = np.linalg.norm(mesh.vertices - mesh.vertices[src], axis=1)
    assert np.all(dj >= fm - 1e-9)
    assert np.all(fm >= chord - 1e-9)


def test_straight_chain_equals_dijkstra():
    x = np.arange(6, dtype=float)
    v = np.concatenate([np.stack([x, 0 * x, 0 * x], 1), np.stack([x, 0 * x + 5, 0 * x], 1)])
    faces = [[i, i + 1, i + 6] for i in range(5)] + [[i + 1, i + 7, i + 6] for i in range(5)]
    mesh = SurfaceMesh(v, np.array(faces))
    fm = fast_march(mesh, 0, seed_radius=0).action
    dj = dijkstra(mesh, 0).action
    np.testing.assert_array_equal(fm[:6], dj[:6])
    np.testing.assert_array_equal(fm[:6], x)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 14))
def test_fmm_edge_consistency(seed, k):
    mesh = bumpy_grid(k, seed)
    f = fast_march(mesh, int(seed % mesh.n_vertices))
    a = f.action
    e = mesh.edges
    assert a[f.source] == 0
    assert np.all(np.abs(a[e[:, 0]] - a[e[:, 1]]) <= mesh.edge_lengths + 1e-9)
    assert np.all(f.state == FROZEN)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_backends_bit_identical(seed):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    mesh = bumpy_grid(10, seed)
    src = seed % mesh.n_vertices
    for solver in ("fmm", "dijkstra"):
        a = sweep(mesh, src, solver, backend="compiled")
        b = sweep(mesh, src, solver, backend="python")
        assert np.array_equal(a.action, b.action)
        assert np.array_equal(a.pred, b.pred)


def test_unreachable_vertices_are_inf():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 0], [6, 5, 0], [5, 6, 0.0]])
    mesh = SurfaceMesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    f = fast_march(mesh, 0)
    assert np.all(np.isinf(f.action[3:]))
    assert list(f.unreached) == [3, 4, 5]
    with pytest.raises(ValueError):
        f.path_to(4)


def test_source_out_of_range():
    with pytest.raises(InputError):
        fast_march(plane_grid(3), 99)
    with pytest.raises(InputError):
        sweep(plane_grid(3), 0, "heat")


def test_seed_ball_contents():
    mesh = plane_grid(10)
    src = grid_vertex(10, 5, 5)
    idx, vals = seed_ball(mesh, src, 2.0)
    assert idx[0] == src and vals[0] == 0
    np.testing.assert_allclose(vals, np.linalg.norm(mesh.vertices[idx] - mesh.vertices[src], axis=1))
    assert vals.max() <= 2.0
    assert len(idx) == 13  # lattice points within radius 2
    assert list(seed_ball(mesh, src, 0)[0]) == [src]


def test_path_to_runs_back_to_source():
    mesh = bumpy_grid(8, 0)
    f = fast_march(mesh, 0)
    p = f.path_to(mesh.n_vertices - 1)
    assert p[0] == mesh.n_vertices - 1 and p[-1] == 0
    assert np.all(f.action[p[:-1]] > f.action[p[1:]])


def test_table_single_source():
    t = build_table(plane_grid(4), [6])
    np.testing.assert_array_equal(t.dist, [[0.0]])


def test_table_two_sources_match_single_sweeps():
    k = 12
    mesh = plane_grid(k)
    a, b = grid_vertex(k, 1, 2), grid_vertex(k, 9, 7)
    t = build_table(mesh, [a, b])
    fa, fb = fast_march(mesh, a), fast_march(mesh, b)
    assert t.dist[0, 1] == t.dist[1, 0]
    assert t.dist[0, 1] == 0.5 * (fa.action[b] + fb.action[a])
    others = np.ones(mesh.n_vertices, bool)
    others[[a, b]] = False
    np.testing.assert_array_equal(t.vertex_dist[others, 0], fa.action[others])
    np.testing.assert_array_equal(t.vertex_dist[others, 1], fb.action[others])
    # source rows carry the symmetrized value so the anchor kernel matches
    assert t.vertex_dist[b, 0] == t.vertex_dist[a, 1] == t.dist[0, 1]


def test_table_properties():
    mesh = bumpy_grid(16, 3)
    rng = np.random.default_rng(0)
    src = rng.choice(mesh.n_vertices, 12, replace=False)
    t = build_table(mesh, src)
    d = t.dist
    assert np.array_equal(d, d.T) and np.all(np.diag(d) == 0) and np.all(d >= 0)
    scale = d.max()
    # tri[i, j, k]: d[i, k] <= d[i, j] + d[j, k], up to the solver's discretization error
    tri = d[:, None, :] <= d[:, :, None] + d[None, :, :] + 0.02 * scale
    assert tri.all()
    assert np.all(t.flags)
    for (i, j), path in t.paths.items():
        assert path[0] == src[j] and path[-1] == src[i]


def test_fmm_raw_asymmetry_small():
    mesh = bumpy_grid(20, 5, amp=0.3, jitter=0.0)
    a, b = 10, 400
    ab = fast_march(mesh, a).action[b]
    ba = fast_march(mesh, b).action[a]
    assert abs(ab - ba) <= 0.02 * ab


def test_table_rejects_duplicate_sources():
    with pytest.raises(InputError):
        build_table(plane_grid(4), [3, 3])


@pytest.mark.parametrize("seed", range(4))
def test_flags_reduce_extractions_without_changing_dist(seed):
    mesh = bumpy_grid(14, seed)
    src = np.random.default_rng(seed).choice(mesh.n_vertices, 15, replace=False)
    on = build_table(mesh, src, use_flags=True)
    off = build_table(mesh, src, use_flags=False)
    assert np.array_equal(on.dist, off.dist)
    assert on.extractions <= off.extractions == 15 * 14 // 2


def test_parallel_table_bit_identical():
    mesh = bumpy_grid(16, 9)
    src = np.arange(0, mesh.n_vertices, 23)
    a = build_table(mesh, src, workers=1)
    b = build_table(mesh, src, workers=4)
    assert np.array_equal(a.dist, b.dist) and np.array_equal(a.vertex_dist, b.vertex_dist)
    assert a.paths.keys() == b.paths.keys()


def test_backend_env_default():
    assert geodesics.BACKEND in BACKENDS
