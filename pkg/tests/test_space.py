import numpy as np
import pytest
from hypothesis import given, strategies as st

from fesharp import mesh as M
from fesharp.elements import FAMILIES, reference_element
from fesharp.manufactured import manufactured
from fesharp.norms import NormSpec, broken_error
from fesharp.quadrature import edge_rule
from fesharp.space import FEFunction, build, check_vanishing, eval, interpolate
from fesharp.study import fit_rate

from conftest import poly_fn

CONFORMING = ("P1", "P2", "P3", "Q1", "Q2")
MEAN_CONTINUOUS = ("CR", "ECR", "Q1ROT", "EQ1ROT")


def mesh_for(family, n=3, amplitude=0.2, seed=0):
    kind = reference_element(family).cell_kind
    m = M.build_structured(n, kind)
    return M.perturb(m, amplitude, seed) if amplitude else m


def test_dof_counts():
    m = M.build_structured(2, M.TRIANGLE)
    p1 = build(m, "P1", 1)
    assert (p1.num_dofs, p1.num_free) == (9, 1)
    assert p1.free[4]  # the centre vertex
    cr = build(m, "CR", 1)
    assert (cr.num_dofs, cr.num_free) == (16, 8)
    assert build(M.build_structured(2, M.QUADRILATERAL), "EQ1ROT").num_dofs == 16
    mo = build(m, "MORLEY", 2)
    assert mo.num_dofs == 9 + 16 and mo.num_free == 1 + 8


def test_space_rejects_wrong_cell_kind():
    with pytest.raises(ValueError):
        build(M.build_structured(2, M.QUADRILATERAL), "P1")
    with pytest.raises(ValueError):
        build(M.build_structured(2), "P1", 3)


def test_interpolate_constant():
    s = build(mesh_for("P1"), "P1")
    f = interpolate(s, poly_fn({(0, 0): 1.0}))
    np.testing.assert_array_equal(f.coeffs, 1.0)
    assert broken_error(s, poly_fn({(0, 0): 1.0}), f, NormSpec(0, 2)) <= 1e-14


def test_interpolate_linear_cr():
    s = build(mesh_for("CR"), "CR")
    u = poly_fn({(1, 0): 1.0, (0, 1): 1.0})
    assert broken_error(s, u, interpolate(s, u), NormSpec(1, 2, seminorm=True)) <= 1e-12


def test_interpolate_rate_p1():
    u = manufactured("sinsin")
    ns = (4, 8, 16, 32)
    errs = [broken_error(s, u, interpolate(s, u), NormSpec(0, 2))
            for s in (build(M.build_structured(n), "P1") for n in ns)]
    assert fit_rate([1 / n for n in ns], errs).slope == pytest.approx(2.0, abs=0.1)


def test_eval_examples():
    s = build(mesh_for("P2"), "P2")
    f = interpolate(s, poly_fn({(2, 0): 1.0}))
    for c in (0, 5, 11):
        assert eval(f, c, [0.2, 0.3], (2, 0)) == pytest.approx(2.0, abs=1e-10)
    s1 = build(mesh_for("P1"), "P1")
    f1 = FEFunction(s1, np.arange(s1.num_dofs, dtype=float))
    for c in range(s1.mesh.num_cells):
        for i, v in enumerate(M.REFERENCE_VERTICES[M.TRIANGLE]):
            assert eval(f1, c, v) == pytest.approx(f1.coeffs[s1.cell_dofs[c, i]], abs=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_eval_chain_rule_fd(family, rng):
    """Reference-coordinate differences of eval(., (0, 0)) match J^T grad, on perturbed meshes."""
    s = build(mesh_for(family, 3, 0.2, 4), family)
    f = FEFunction(s, rng.uniform(-1, 1, s.num_dofs))
    quad = s.mesh.kind == M.QUADRILATERAL
    h = 1e-5
    for _ in range(6):
        c = int(rng.integers(s.mesh.num_cells))
        p = rng.uniform(-0.7, 0.7, 2) if quad else np.array([0.2, 0.3]) + rng.uniform(0, 0.3, 2)
        _, jac = M.cell_map(s.mesh, c, p)
        grad = np.array([eval(f, c, p, (1, 0)), eval(f, c, p, (0, 1))])
        fd = np.array([(eval(f, c, p + e) - eval(f, c, p - e)) / (2 * h) for e in np.eye(2) * h])
        np.testing.assert_allclose(jac.T @ grad, fd, atol=1e-6)


def test_check_vanishing_examples():
    q1 = build(mesh_for("Q1", 4, 0.0), "Q1")
    assert check_vanishing(q1, (2, 0)) <= 1e-11
    assert check_vanishing(q1, (0, 2)) <= 1e-11
    assert check_vanishing(q1, (1, 1)) > 1e-3
    rot = build(mesh_for("Q1ROT", 4, 0.2), "Q1ROT")
    assert check_vanishing(rot, (1, 1)) <= 1e-11
    assert check_vanishing(rot, (2, 0)) > 0
    cr = build(mesh_for("CR", 4, 0.2), "CR")
    assert all(check_vanishing(cr, g) <= 1e-11 for g in ((2, 0), (1, 1), (0, 2)))


@given(st.sampled_from([f for f in FAMILIES if not reference_element(f).parametric]),
       st.integers(2, 5), st.floats(0.0, 0.3), st.integers(0, 1000))
def test_gamma_vanishing_on_perturbed_meshes(family, n, amp, seed):
    s = build(mesh_for(family, n, amp, seed), family)
    for g in s.element.gamma:
        assert check_vanishing(s, g, trials=2, seed=seed) <= 1e-10


@given(st.sampled_from(["Q1", "Q2"]), st.integers(1, 5))
def test_gamma_vanishing_parametric_on_affine_meshes(family, n):
    s = build(mesh_for(family, n, 0.0), family)
    for g in s.element.gamma:
        assert check_vanishing(s, g) <= 1e-10


def test_parametric_gamma_needs_parallelograms():
    # on a non-parallelogram the bilinear map mixes x and y, so D^(2,0) of Q1 is nonzero
    s = build(mesh_for("Q1", 3, 0.2, 1), "Q1")
    assert check_vanishing(s, (2, 0)) > 1e-3


def _edge_traces(f, alpha=(0, 0), normal=False):
    """D^alpha f (or the normal derivative) along interior edges from both sides: (left, right, weights)."""
    s = f.space
    m = s.mesh
    t, w = edge_rule(5)
    loc = M.local_edges(m.kind)
    ref = M.REFERENCE_VERTICES[m.kind]
    left, right = [], []
    interior = np.flatnonzero(~m.boundary_edges)
    for e in interior:
        side = []
        for c in m.edge_cells[e]:
            k = int(np.flatnonzero(m.cell_edges[c] == e)[0])
            a, b = loc[k]
            if m.cells[c, a] != m.edges[e, 0]:
                a, b = b, a
            pts = ref[a] + t[:, None] * (ref[b] - ref[a])
            if normal:
                d = m.vertices[m.edges[e, 1]] - m.vertices[m.edges[e, 0]]
                nrm = np.array([d[1], -d[0]]) / np.hypot(*d)
                tab = s.tabulate(pts, [(1, 0), (0, 1)], [c])
                side.append(nrm[0] * f.derivs(tab, (1, 0))[0] + nrm[1] * f.derivs(tab, (0, 1))[0])
            else:
                tab = s.tabulate(pts, [alpha], [c])
                side.append(f.derivs(tab, alpha)[0])
        left.append(side[0])
        right.append(side[1])
    return np.array(left), np.array(right), w


@pytest.mark.parametrize("family", CONFORMING)
def test_conforming_continuity(family, rng):
    s = build(mesh_for(family, 3, 0.0 if family in ("Q1", "Q2") else 0.2, 2), family)
    f = FEFunction(s, rng.uniform(-1, 1, s.num_dofs))
    left, right, _ = _edge_traces(f)
    assert np.max(np.abs(left - right)) <= 1e-10


@pytest.mark.parametrize("family", ["Q1", "Q2"])
def test_conforming_continuity_perturbed_quads(family, rng):
    s = build(mesh_for(family, 3, 0.2, 2), family)
    f = FEFunction(s, rng.uniform(-1, 1, s.num_dofs))
    left, right, _ = _edge_traces(f)
    assert np.max(np.abs(left - right)) <= 1e-10


@pytest.mark.parametrize("family", MEAN_CONTINUOUS)
def test_mean_continuity(family, rng):
    s = build(mesh_for(family, 3, 0.2, 3), family)
    f = FEFunction(s, rng.uniform(-1, 1, s.num_dofs))
    left, right, w = _edge_traces(f)
    assert np.max(np.abs((left - right) @ w)) <= 1e-10
    # and they are genuinely nonconforming
    assert np.max(np.abs(left - right)) > 1e-6


def test_morley_continuity(rng):
    s = build(mesh_for("MORLEY", 3, 0.2, 3), "MORLEY")
    f = FEFunction(s, rng.uniform(-1, 1, s.num_dofs))
    # vertex values are shared coefficients, so they agree across cells
    for c in range(s.mesh.num_cells):
        for i, v in enumerate(M.REFERENCE_VERTICES[M.TRIANGLE]):
            assert eval(f, c, v) == pytest.approx(f.coeffs[s.cell_dofs[c, i]], abs=1e-12)
    nl, nr, w = _edge_traces(f, normal=True)
    assert np.max(np.abs((nl - nr) @ w)) <= 1e-10
    assert np.max(np.abs(nl - nr)) > 1e-6


def test_essential_dofs_zero_after_interpolation():
    u = manufactured("polyplus")
    for family in FAMILIES:
        s = build(mesh_for(family, 3, 0.1), family, 2 if family == "MORLEY" else 1)
        f = interpolate(s, u)
        assert np.all(f.coeffs[s.constrained] == 0.0)
        assert s.num_free < s.num_dofs


def test_fefunction_shape_check():
    s = build(mesh_for("P1"), "P1")
    with pytest.raises(ValueError):
        FEFunction(s, np.zeros(3))
