import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fesharp.manufactured import CATALOG, PLATE_MODES, clamped_plate_mode, laplace_eigenpair, manufactured

PI = math.pi
pts = st.tuples(st.floats(0.05, 0.95), st.floats(0.05, 0.95))


def test_catalog_and_errors():
    assert set(CATALOG) >= {"sinsin", "sinsin2", "polyplus", "cubic"}
    with pytest.raises(ValueError):
        manufactured("nope")
    assert manufactured("sinsin").eigenvalue == pytest.approx(2 * PI ** 2)
    assert manufactured("cubic").polynomial_degree == 3


@given(pts)
def test_sinsin_source(p):
    x, y = p
    u = manufactured("sinsin")
    assert u.f_laplace(x, y) == pytest.approx(2 * PI ** 2 * math.sin(PI * x) * math.sin(PI * y), abs=1e-12)


@given(st.sampled_from(["sinsin", "sinsin2", "polyplus", "cubic"]), pts,
       st.sampled_from([(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (2, 1)]))
def test_derivatives_match_finite_differences(sid, p, alpha):
    u = manufactured(sid)
    h = 1e-5
    x, y = p
    fx = (u(x + h, y, alpha) - u(x - h, y, alpha)) / (2 * h)
    fy = (u(x, y + h, alpha) - u(x, y - h, alpha)) / (2 * h)
    assert u(x, y, (alpha[0] + 1, alpha[1])) == pytest.approx(fx, abs=1e-5 * max(1, abs(fx)))
    assert u(x, y, (alpha[0], alpha[1] + 1)) == pytest.approx(fy, abs=1e-5 * max(1, abs(fy)))


@pytest.mark.parametrize("sid", ["sinsin2", "plate1"])
def test_clamped_boundary(sid):
    u = manufactured(sid)
    t = np.linspace(0, 1, 11)
    for x, y in ((t, 0 * t), (t, 1 + 0 * t), (0 * t, t), (1 + 0 * t, t)):
        for alpha in ((0, 0), (1, 0), (0, 1)):
            assert np.max(np.abs(u(x, y, alpha))) <= 1e-12


def test_sinsin_boundary():
    u = manufactured("sinsin")
    t = np.linspace(0, 1, 11)
    assert np.max(np.abs(u(t, 0 * t))) <= 1e-15 and np.max(np.abs(u(0 * t + 1, t))) <= 1e-15


def test_cubic_values():
    u = manufactured("cubic")
    assert u(0.5, 0.25) == pytest.approx(0.125 - 0.0625)
    assert u(0.3, 0.7, (3, 0)) == pytest.approx(6.0)
    assert u(0.3, 0.7, (2, 1)) == pytest.approx(-2.0)
    assert u(0.3, 0.7, (1, 2)) == 0.0


def test_laplace_eigenpair_normalized():
    e = laplace_eigenpair()
    x, w = np.polynomial.legendre.leggauss(20)
    x, w = 0.5 * (x + 1), 0.5 * w
    X, Y = np.meshgrid(x, x)
    W = np.outer(w, w)
    assert np.sum(W * e(X, Y) ** 2) == pytest.approx(1.0, abs=1e-13)
    assert np.max(np.abs(e.f_laplace(X, Y) - e.eigenvalue * e(X, Y))) <= 1e-11


def test_clamped_plate_mode():
    lam, c = clamped_plate_mode()
    # literature value of the first clamped-plate eigenvalue on the unit square: 1294.9339796...
    assert lam == pytest.approx(1294.93397963, rel=1e-9)
    lam_fewer, _ = clamped_plate_mode(PLATE_MODES - 2)
    assert lam_fewer >= lam  # Ritz values decrease as the trial space grows
    u = manufactured("plate1")
    assert u.eigenvalue == lam
    assert u(0.5, 0.5) > 0
    # approximate eigen-relation away from the corners
    x = np.array([0.3, 0.5, 0.6])
    resid = u.f_biharmonic(x, x[::-1]) - lam * u(x, x[::-1])
    assert np.max(np.abs(resid)) <= 1e-4 * lam * np.max(np.abs(u(x, x[::-1])))


def test_scaled():
    u = manufactured("sinsin").scaled(3.0, "s3")
    assert u.id == "s3" and u(0.5, 0.5) == pytest.approx(3.0)
