"""Quadrature rules on the reference triangle and the reference square.

The reference triangle is {(x, y): x, y >= 0, x + y <= 1} (area 1/2) and the
reference square is [-1, 1]^2 (area 4).  Triangle rules of degree 4 and up are
fully symmetric, positive and interior; their orbit parameters were fitted to
rounding level by ``scripts/fit_simplex_rules.py`` and are frozen below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_SIMPLEX_DEGREE = 10
MAX_BOX_DEGREE = 11


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.weights)


# degree -> ((centroid, #3-orbits, #6-orbits), orbit parameters)
# 3-orbit parameters are (a, w) for barycentric (a, a, 1-2a);
# 6-orbit parameters are (a, b, w) for barycentric (a, b, 1-a-b).
_SYMMETRIC_ORBITS = {
    # degree 4, max relative moment residual 1.7e-16
    4: ((0, 2, 0), (
        0.44594849091596495,
        0.11169079483900574,
        0.09157621350977073,
        0.05497587182766093,
    )),
    # degree 5, max relative moment residual 3.6e-16
    5: ((1, 2, 0), (
        0.11250000000000046,
        0.4701420641051153,
        0.0661970763942529,
        0.1012865073234564,
        0.06296959027241363,
    )),
    # degree 6, max relative moment residual 2.9e-16
    6: ((0, 2, 1), (
        0.24928674517091812,
        0.05839313786318316,
        0.06308901449150053,
        0.025422453185102202,
        0.31035245103377834,
        0.6365024991213992,
        0.04142553780919064,
    )),
    # degree 7, max relative moment residual 3.9e-16
    7: ((0, 3, 1), (
        0.20438397510838743,
        0.039095750274552546,
        0.06267135275343495,
        0.024822263062822685,
        0.40849259037493746,
        0.041206876470020914,
        0.31292414720201267,
        0.6496252361777046,
        0.030770888429635254,
    )),
    # degree 8, max relative moment residual 3.1e-16
    8: ((1, 3, 1), (
        0.07215780383889132,
        0.0505472283170309,
        0.0162292488115991,
        0.45929258829272035,
        0.04754581713364393,
        0.17056930775175708,
        0.05160868526735903,
        0.7284923929553999,
        0.26311282963464583,
        0.013615157087217077,
    )),
    # degree 9, max relative moment residual 3.6e-16
    9: ((1, 4, 1), (
        0.04856789814138413,
        0.04472951339445291,
        0.012788837829349179,
        0.18820353561902817,
        0.03982386946360365,
        0.48968251919872835,
        0.015667350113578633,
        0.4370895914929184,
        0.03891377050238518,
        0.03683841205473546,
        0.221962989160768,
        0.02164176968864432,
    )),
    # degree 10, max relative moment residual 3.4e-16
    10: ((1, 2, 3), (
        0.040871664573095656,
        0.14216110105676785,
        0.022978981802390646,
        0.032055373216915144,
        0.006676484406563135,
        0.32181299528896024,
        0.5300541189271673,
        0.031952453198180124,
        0.36914678182772714,
        0.6012333286835365,
        0.01709232408149502,
        0.1637017337370376,
        0.8079306009229569,
        0.012648878853665358,
    )),
}


def _expand(structure, params):
    centroid, n3, n6 = structure
    pts, wts = [], []
    k = 0
    if centroid:
        pts.append((1 / 3, 1 / 3))
        wts.append(params[k])
        k += 1
    for _ in range(n3):
        a, w = params[k:k + 2]
        k += 2
        c = 1 - 2 * a
        pts += [(a, a), (a, c), (c, a)]
        wts += [w] * 3
    for _ in range(n6):
        a, b, w = params[k:k + 3]
        k += 3
        c = 1 - a - b
        pts += [(a, b), (a, c), (b, a), (b, c), (c, a), (c, b)]
        wts += [w] * 6
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def rule_simplex(degree: int) -> QuadRule:
    """Symmetric rule on the reference triangle, exact to at least ``degree``."""
    degree = int(degree)
    if degree < 1 or degree > MAX_SIMPLEX_DEGREE:
        raise ValueError(f"simplex quadrature degree must lie in [1, {MAX_SIMPLEX_DEGREE}], got {degree}")
    if degree == 1:
        pts, wts, exact = np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1
    elif degree == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        wts, exact = np.full(3, 1 / 6), 2
    else:
        exact = max(degree, 4)
        pts, wts = _expand(*_SYMMETRIC_ORBITS[exact])
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, exact)


@lru_cache(maxsize=None)
def gauss_1d(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def rule_box(degree: int) -> QuadRule:
    """Tensor Gauss rule on [-1, 1]^2 with ceil((degree+1)/2) points per axis."""
    degree = int(degree)
    if degree < 1 or degree > MAX_BOX_DEGREE:
        raise ValueError(f"box quadrature degree must lie in [1, {MAX_BOX_DEGREE}], got {degree}")
    k = math.ceil((degree + 1) / 2)
    x, w = gauss_1d(k)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w, w).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, 2 * k - 1)


def rule_for(cell_kind: str, degree: int) -> QuadRule:
    if cell_kind == "triangle":
        return rule_simplex(min(degree, MAX_SIMPLEX_DEGREE))
    return rule_box(min(degree, MAX_BOX_DEGREE))


@lru_cache(maxsize=None)
def edge_rule(npts: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on [0, 1] with weights summing to 1 (edge means)."""
    x, w = gauss_1d(npts)
    t = (x + 1) / 2
    wt = w / 2
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


def reference_monomial_integral(cell_kind: str, a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference cell."""
    if cell_kind == "triangle":
        return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)

    def line(k):
        return 0.0 if k % 2 else 2.0 / (k + 1)

    return line(a) * line(b)
