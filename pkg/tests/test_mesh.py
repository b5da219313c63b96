import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fesharp import mesh as M

kinds = st.sampled_from([M.TRIANGLE, M.QUADRILATERAL])


def test_structured_two_triangles_counts():
    m = M.build_structured(2, M.TRIANGLE)
    assert (m.num_vertices, m.num_cells, m.num_edges) == (9, 8, 16)
    assert M.quality(m).h == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    m.validate()


def test_single_quad():
    m = M.build_structured(1, M.QUADRILATERAL)
    assert m.num_cells == 1
    assert int(m.boundary_edges.sum()) == 4
    assert M.quality(m).h == pytest.approx(math.sqrt(2), abs=1e-15)


def test_structured_triangle_sigma():
    sigma = M.quality(M.build_structured(4, M.TRIANGLE)).sigma
    assert sigma == pytest.approx((2 - math.sqrt(2)) / (2 * math.sqrt(2)), abs=1e-14)


def test_refine_counts_and_h():
    m = M.refine_uniform(M.build_structured(2, M.TRIANGLE))
    assert m.num_cells == 32
    assert M.quality(m).h == pytest.approx(math.sqrt(2) / 4, abs=1e-15)
    q = M.refine_uniform(M.refine_uniform(M.build_structured(1, M.QUADRILATERAL)))
    assert q.num_cells == 16
    q.validate()


@given(st.integers(1, 6), kinds)
def test_refinement_halves_h_and_keeps_sigma(n, kind):
    m = M.build_structured(n, kind)
    r = M.refine_uniform(m)
    r.validate()
    q0, q1 = M.quality(m), M.quality(r)
    assert abs(q1.h - q0.h / 2) <= 1e-14
    assert q1.sigma == pytest.approx(q0.sigma, abs=1e-13)
    assert abs(r.cell_areas.sum() - 1.0) <= 1e-12


def test_perturb_identity_and_determinism():
    m = M.build_structured(8, M.TRIANGLE)
    assert np.array_equal(M.perturb(m, 0.0, 3).vertices, m.vertices)
    a, b = M.perturb(m, 0.2, 7), M.perturb(m, 0.2, 7)
    assert a.vertices.tobytes() == b.vertices.tobytes()
    assert not np.array_equal(M.perturb(m, 0.2, 8).vertices, a.vertices)


def test_perturb_example():
    p = M.perturb(M.build_structured(8, M.TRIANGLE), 0.2, 7)
    p.validate()
    assert M.quality(p).sigma > 0.05
    assert abs(p.cell_areas.sum() - 1.0) <= 1e-12


@given(st.integers(2, 8), kinds, st.floats(0.0, 0.3), st.integers(0, 2 ** 32))
def test_perturb_invariants(n, kind, amp, seed):
    m = M.build_structured(n, kind)
    p = M.perturb(m, amp, seed)
    p.validate()
    assert abs(p.cell_areas.sum() - 1.0) <= 1e-12
    assert np.array_equal(p.boundary_vertices, m.boundary_vertices)
    again = M.perturb(m, amp, seed)
    assert p.vertices.tobytes() == again.vertices.tobytes()


def test_splitmix_reference_values():
    # published test vector for SplitMix64 seeded with 0
    assert M.splitmix64(0) == 0xE220A8397B1DCDAF


def test_grading():
    assert np.array_equal(M.grade_toward_corner(5, 1.0).vertices, M.build_structured(5).vertices)
    g = M.grade_toward_corner(4, 0.5)
    xs = np.unique(g.vertices[g.vertices[:, 1] == 0.0, 0])
    assert xs[1] == pytest.approx(0.0625, abs=1e-15)
    q4 = M.quality(g)
    q16 = M.quality(M.grade_toward_corner(16, 0.5))
    assert q16.beta >= 8
    assert q16.sigma >= q4.sigma / 2
    assert q16.beta > M.quality(M.build_structured(16)).beta


@given(st.integers(2, 12), st.floats(0.2, 1.0))
def test_graded_meshes_valid(n, mu):
    g = M.grade_toward_corner(n, mu)
    g.validate()
    assert abs(g.cell_areas.sum() - 1.0) <= 1e-12


def test_cell_map_examples():
    tri = M.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([[0, 1, 2], [1, 3, 2]]),
                 M.TRIANGLE)
    x, jac = M.cell_map(tri, 0, np.array([0.0, 0.0]))
    np.testing.assert_allclose(x, [0.0, 0.0])
    np.testing.assert_allclose(jac, np.eye(2))
    m = M.perturb(M.build_structured(3, M.TRIANGLE), 0.2, 1)
    for c in range(m.num_cells):
        x, _ = M.cell_map(m, c, np.array([1 / 3, 1 / 3]))
        np.testing.assert_allclose(x, m.cell_coords()[c].mean(axis=0), atol=1e-15)
    sq = M.build_structured(4, M.QUADRILATERAL)
    for ref in ([0.0, 0.0], [0.3, -0.7], [1.0, 1.0]):
        _, jac = M.cell_map(sq, 5, np.array(ref))
        assert np.linalg.det(jac) == pytest.approx(0.25 ** 2 / 4, abs=1e-16)


def test_right_triangle_quality():
    tri = M.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), M.TRIANGLE)
    assert tri.cell_diameters[0] == pytest.approx(math.sqrt(2))
    assert M.inradius(tri)[0] == pytest.approx((2 - math.sqrt(2)) / 2, abs=1e-15)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_quad_beta_one(n):
    assert M.quality(M.build_structured(n, M.QUADRILATERAL)).beta == pytest.approx(1.0, abs=1e-14)


@given(st.integers(1, 6), kinds)
def test_adjacency_symmetric(n, kind):
    m = M.build_structured(n, kind)
    ec = m.edge_cells
    for e, (l, r) in enumerate(ec):
        assert e in m.cell_edges[l]
        if r >= 0:
            assert e in m.cell_edges[r]
    # every cell edge appears in exactly its owners
    counts = np.bincount(m.cell_edges.ravel(), minlength=m.num_edges)
    assert np.array_equal(counts, np.where(m.boundary_edges, 1, 2))


def test_validate_rejects_bad_meshes():
    m = M.build_structured(2, M.TRIANGLE)
    flipped = M.Mesh(m.vertices, m.cells[:, ::-1], M.TRIANGLE)
    with pytest.raises(M.MeshError):
        flipped.validate()
    with pytest.raises(M.MeshError):
        M.Mesh(m.vertices, m.cells[:4], M.TRIANGLE).validate()
    with pytest.raises(M.MeshError):
        M.build_structured(0)
    with pytest.raises(M.MeshError):
        M.grade_toward_corner(4, 0.0)


def test_write_read_roundtrip(tmp_path):
    m = M.perturb(M.build_structured(3, M.QUADRILATERAL), 0.2, 5)
    path = tmp_path / "m.txt"
    m.write(path)
    back = M.Mesh.read(path)
    assert back.kind == m.kind
    assert back.vertices.tobytes() == m.vertices.tobytes()
    assert np.array_equal(back.cells, m.cells)
    (tmp_path / "bad.txt").write_text("hello\n")
    with pytest.raises(M.MeshError):
        M.Mesh.read(tmp_path / "bad.txt")
