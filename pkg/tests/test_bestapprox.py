import numpy as np
import pytest
from hypothesis import given, strategies as st

from fesharp import mesh as M
from fesharp.assembly import assemble_load, assemble_mass, solve_spd
from fesharp.bestapprox import BestApproxError, _gram_system, _load, best_approx, best_approx_surrogate
from fesharp.elements import reference_element
from fesharp.manufactured import manufactured
from fesharp.norms import INF, NormSpec, broken_error
from fesharp.space import FEFunction, build, interpolate

from conftest import poly_fn


def space(family, n, amplitude=0.0, seed=0):
    m = M.build_structured(n, reference_element(family).cell_kind)
    if amplitude:
        m = M.perturb(m, amplitude, seed)
    return build(m, family)


def test_discrete_u_has_zero_distance():
    s = space("CR", 4, 0.2)
    res = best_approx(s, poly_fn({(1, 0): 1.0, (0, 1): 1.0}), 1)
    assert res.distance <= 1e-10
    assert res.distance_identity <= 1e-6  # cancellation floor of the identity route


def test_cubic_in_p3():
    s = space("P3", 4, 0.2)
    assert best_approx(s, manufactured("cubic"), 0).distance <= 1e-10


def test_l2_projection_coincides():
    s = space("P1", 8, 0.2, 1)
    u = manufactured("sinsin")
    res = best_approx(s, u, 0)
    proj = solve_spd(assemble_mass(s, constrain=False), assemble_load(s, lambda x, y: u(x, y), constrain=False),
                     rel_tol=1e-13)
    np.testing.assert_allclose(res.minimizer.coeffs, proj, atol=1e-11)
    d_proj = broken_error(s, u, FEFunction(s, proj), NormSpec(0, 2))
    assert abs(res.distance - d_proj) <= 1e-12


@pytest.mark.parametrize("family,j", [("P1", 0), ("P1", 1), ("CR", 1), ("Q1ROT", 1), ("P2", 2)])
def test_orthogonality_residual(family, j):
    s = space(family, 6, 0.2, 2)
    u = manufactured("polyplus")
    res = best_approx(s, u, j)
    cells = np.arange(s.mesh.num_cells)
    b, unorm2 = _load(s, u, j, cells)
    gram, active, _ = _gram_system(s, j, None)
    resid = b - gram @ res.minimizer.coeffs
    assert np.max(np.abs(resid[active])) <= 1e-9 * np.sqrt(unorm2)


@pytest.mark.parametrize("family", ["P1", "CR", "P2", "Q1"])
def test_distance_monotone_and_below_interpolation(family):
    u = manufactured("sinsin")
    prev = np.inf
    for n in (2, 4, 8, 16):
        s = space(family, n)
        for j in range(reference_element(family).order):
            res = best_approx(s, u, j)
            interp = broken_error(s, u, interpolate(s, u), NormSpec(j, 2))
            assert res.distance <= interp * (1 + 1e-12)
            if j == 0:
                assert res.distance <= prev * (1 + 1e-12)
                prev = res.distance


@pytest.mark.parametrize("family,j", [("P1", 0), ("P1", 1), ("CR", 1), ("Q1", 1)])
def test_distance_two_routes_agree(family, j):
    s = space(family, 8, 0.1)
    res = best_approx(s, manufactured("sinsin"), j)
    assert res.solver == "cg"
    assert res.distance == pytest.approx(res.distance_identity, rel=1e-6)


@given(st.integers(0, 10 ** 6))
def test_minimizer_beats_random_perturbations(seed):
    rng = np.random.default_rng(seed)
    s = space("P1", 4, 0.2, seed % 97)
    u = manufactured("sinsin")
    res = best_approx(s, u, 1)
    spec = NormSpec(1, 2)
    pert = FEFunction(s, res.minimizer.coeffs + 1e-3 * rng.standard_normal(s.num_dofs))
    assert res.distance <= broken_error(s, u, pert, spec) + 1e-14


def test_p1_h1_band():
    u = manufactured("sinsin")
    ratios = []
    for n in (8, 16, 32, 64):
        s = space("P1", n)
        ratios.append(best_approx(s, u, 1).distance / M.quality(s.mesh).h)
    assert min(ratios) > 0 and max(ratios) / min(ratios) <= 3


def test_region_best_approx():
    s = space("P1", 8, 0.1)
    u = manufactured("sinsin")
    region = (0.25, 0.75, 0.25, 0.75)
    local = best_approx(s, u, 1, region)
    whole = best_approx(s, u, 1)
    spec = NormSpec(1, 2, region)
    assert local.distance <= broken_error(s, u, whole.minimizer, spec) * (1 + 1e-12)
    with pytest.raises(BestApproxError):
        best_approx(s, u, 1, (0.0, 0.05, 0.0, 0.05))


def test_gram_cache_is_reused():
    s = space("CR", 4)
    best_approx(s, manufactured("sinsin"), 1)
    first = s._cache[("gram", 1, None)]
    best_approx(s, manufactured("polyplus"), 1)
    assert s._cache[("gram", 1, None)] is first


def test_p_must_be_two():
    with pytest.raises(BestApproxError):
        best_approx(space("P1", 2), manufactured("sinsin"), 0, p=1)


def test_surrogate_examples():
    s = space("CR", 4, 0.2)
    lin = poly_fn({(1, 0): 2.0, (0, 0): -1.0})
    for p in (1, INF):
        sr = best_approx_surrogate(s, lin, 1, p)
        assert sr.at_minimizer <= 1e-10 and sr.at_interpolant <= 1e-10
    sr = best_approx_surrogate(s, manufactured("sinsin"), 0, INF)
    assert sr.value <= sr.at_minimizer and sr.value <= sr.at_interpolant


def test_surrogate_sup_band():
    u = manufactured("sinsin")
    ratios = []
    for n in (8, 16, 32, 64):
        s = space("P1", n)
        ratios.append(best_approx_surrogate(s, u, 0, INF).value / M.quality(s.mesh).h ** 2)
    assert max(ratios) / min(ratios) <= 4


def test_lu_fallback_for_ill_conditioned_gram():
    # the P3 j=3 Gram on a fine mesh sits below the CG floor of 1e-13
    s = space("P3", 16)
    res = best_approx(s, manufactured("sinsin"), 3)
    assert res.solver == "lu"
    assert res.residual <= 1e-11
    assert res.distance <= broken_error(s, manufactured("sinsin"), interpolate(s, manufactured("sinsin")),
                                        NormSpec(3, 2))
