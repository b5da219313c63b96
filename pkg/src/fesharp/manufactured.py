"""Closed-form manufactured solutions and reference eigenpairs.

Every solution is a finite separable sum  u(x, y) = sum_k c_k X_k(x) Y_k(y)
of 1D factors with derivatives of any order, so D^alpha u is exact for every
alpha (the Gamma gate needs order-4 derivatives for P3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from scipy.linalg import eigh

PI = math.pi


class Sine:
    """amp * sin(freq * t + phase) + shift."""

    def __init__(self, amp=1.0, freq=PI, phase=0.0, shift=0.0):
        self.amp, self.freq, self.phase, self.shift = amp, freq, phase, shift

    def __call__(self, t, d=0):
        v = self.amp * self.freq ** d * np.sin(self.freq * t + self.phase + 0.5 * PI * d)
        return v + self.shift if d == 0 else v


class Series:
    """A numpy polynomial series (Polynomial, Legendre, ...) used as a 1D factor."""

    def __init__(self, poly):
        self.poly = poly
        self._derivs = {0: poly}

    def __call__(self, t, d=0):
        if d not in self._derivs:
            self._derivs[d] = self.poly.deriv(d)
        return self._derivs[d](t)


def _poly(*coef):
    return Series(Polynomial(coef))


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    id: str
    terms: tuple  # (coefficient, X, Y)
    boundary_order: int = 0  # 1: u = 0 on the boundary, 2: also du/dn = 0
    polynomial_degree: Optional[int] = None
    eigenvalue: Optional[float] = None  # set when (u, eigenvalue) is an eigenpair
    operator: Optional[str] = None  # laplace | biharmonic, for eigenpairs

    @property
    def polynomial(self) -> bool:
        return self.polynomial_degree is not None

    def __call__(self, x, y, alpha=(0, 0)):
        a1, a2 = alpha
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for c, fx, fy in self.terms:
            out = out + c * fx(x, a1) * fy(y, a2)
        return out

    def f_laplace(self, x, y):
        return -(self(x, y, (2, 0)) + self(x, y, (0, 2)))

    def f_biharmonic(self, x, y):
        return self(x, y, (4, 0)) + 2.0 * self(x, y, (2, 2)) + self(x, y, (0, 4))

    def scaled(self, factor: float, id: str | None = None) -> "ManufacturedSolution":
        terms = tuple((factor * c, fx, fy) for c, fx, fy in self.terms)
        return ManufacturedSolution(id or self.id, terms, self.boundary_order, self.polynomial_degree,
                                    self.eigenvalue, self.operator)


def _sinsin():
    s = Sine()
    return ManufacturedSolution("sinsin", ((1.0, s, s),), boundary_order=1, eigenvalue=2 * PI ** 2,
                                operator="laplace")


def _sinsin2():
    # sin^2(pi t) = 1/2 - cos(2 pi t)/2
    s2 = Sine(amp=-0.5, freq=2 * PI, phase=0.5 * PI, shift=0.5)
    return ManufacturedSolution("sinsin2", ((1.0, s2, s2),), boundary_order=2)


def _polyplus():
    s = Sine()
    return ManufacturedSolution("polyplus", ((1.0, _poly(0, 0, 0, 1), _poly(0, 1)), (1.0, s, s)))


def _cubic():
    return ManufacturedSolution("cubic", ((1.0, _poly(0, 0, 0, 1), _poly(1)), (-1.0, _poly(0, 0, 1), _poly(0, 1))),
                                polynomial_degree=3)


PLATE_MODES = 12  # even Legendre indices 0, 2, ..., 22 per direction


def _plate_basis(nmodes):
    bubble = Legendre.fromroots([1.0, 1.0, -1.0, -1.0]) / 16.0  # x^2 (1-x)^2 in t = 2x - 1
    return [Legendre((bubble * Legendre.basis(2 * i)).coef, domain=[0.0, 1.0]) for i in range(nmodes)]


@lru_cache(maxsize=None)
def clamped_plate_mode(nmodes: int = PLATE_MODES) -> tuple[float, np.ndarray]:
    """Ritz approximation of the first clamped-plate eigenpair on the unit square.

    Trial space: products X_i(x) X_k(y) with X_i = x^2 (1-x)^2 P_{2i}(2x - 1),
    which satisfy u = du/dn = 0 and carry the symmetry of the first mode.
    Returns (lambda, C) with u = sum_ik C[i, k] X_i(x) X_k(y), ||u||_0 = 1, u(1/2, 1/2) > 0.
    The Ritz value converges from above; corner singularities of the plate
    modes (about r^3.74 at each corner) make the rate algebraic, and at the
    default size lambda is settled to ~1e-10 relative, the H^2 shape to ~1e-5.
    """
    basis = _plate_basis(nmodes)
    t, w = np.polynomial.legendre.leggauss(4 * nmodes + 8)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    v = [np.array([b.deriv(d)(t) if d else b(t) for b in basis]) for d in range(3)]
    mats = [(v[d] * w) @ v[d].T for d in range(3)]
    m0, k1, k2 = mats
    a = np.kron(k2, m0) + 2.0 * np.kron(k1, k1) + np.kron(m0, k2)
    b = np.kron(m0, m0)
    lam, vec = eigh(a, b, subset_by_index=[0, 0])
    c = vec[:, 0].reshape(nmodes, nmodes)
    c /= math.sqrt(float(vec[:, 0] @ b @ vec[:, 0]))
    mid = np.array([bb(0.5) for bb in basis])
    if mid @ c @ mid < 0:
        c = -c
    return float(lam[0]), c


def _plate1(nmodes: int = PLATE_MODES):
    lam, c = clamped_plate_mode(nmodes)
    basis = _plate_basis(c.shape[0])
    terms = []
    for i, bx in enumerate(basis):
        comb = sum((c[i, k] * basis[k] for k in range(len(basis))), Legendre([0.0], domain=[0.0, 1.0]))
        terms.append((1.0, Series(bx), Series(comb)))
    name = "plate1" if nmodes == PLATE_MODES else f"plate1_{nmodes}"
    return ManufacturedSolution(name, tuple(terms), boundary_order=2, eigenvalue=lam, operator="biharmonic")


CATALOG = {"sinsin": _sinsin, "sinsin2": _sinsin2, "polyplus": _polyplus, "cubic": _cubic, "plate1": _plate1}


@lru_cache(maxsize=None)
def manufactured(id: str) -> ManufacturedSolution:  # noqa: A002
    try:
        return CATALOG[id]()
    except KeyError:
        raise ValueError(f"unknown manufactured solution {id!r}; known: {', '.join(CATALOG)}") from None


def laplace_eigenpair() -> ManufacturedSolution:
    """First Dirichlet Laplace eigenpair 2 sin(pi x) sin(pi y), unit L2 norm, lambda = 2 pi^2."""
    return manufactured("sinsin").scaled(2.0, "sinsin_eigen")
