"""Element families: local spaces, degrees of freedom and the vanishing set Gamma.

Every local space is spanned by polynomial *generators* written in the monomial
basis of a local coordinate.  Nodal bases are obtained by inverting the matrix
of DOF functionals applied to the generators.

Two realizations are used.  ``Q1`` and ``Q2`` are parametric: their basis lives
on the reference square and is pushed forward through the bilinear cell map.
All other families are built directly in physical coordinates on each cell,
with local coordinate ``s = (x - center) / scale``.  On triangles this coincides
with the affine push-forward for the Lagrange and CR spaces; for ECR, Q1ROT,
EQ1ROT and Morley it is the only choice under which the local space (and hence
Gamma) is independent of the cell shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from . import quadrature
from .mesh import QUADRILATERAL, REFERENCE_VERTICES, TRIANGLE, local_edges, map_coords

MAX_DERIVATIVE = 3

FAMILIES = ("P1", "P2", "P3", "Q1", "Q2", "CR", "ECR", "Q1ROT", "EQ1ROT", "MORLEY")


class MultiIndex(NamedTuple):
    a1: int
    a2: int

    @property
    def length(self) -> int:
        return self.a1 + self.a2


def multi_indices(order: int) -> list[MultiIndex]:
    """All multi-indices of length ``order``, (order, 0) first."""
    return [MultiIndex(order - k, k) for k in range(order + 1)]


def _as_index(alpha) -> MultiIndex:
    a = MultiIndex(int(alpha[0]), int(alpha[1]))
    if a.a1 < 0 or a.a2 < 0:
        raise ValueError(f"negative multi-index {alpha!r}")
    return a


@dataclass(frozen=True)
class Dof:
    """One local degree of freedom.

    kind is ``point``, ``edge_mean``, ``cell_mean`` or ``edge_normal_mean``;
    entity is ``vertex``, ``edge`` or ``cell`` with its local index.  Points on
    an edge sit at parameter ``t`` measured along the global edge orientation.
    """
    kind: str
    entity: str
    index: int
    sub: int = 0
    t: float = 0.5


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    family: str
    cell_kind: str
    order: int
    conformity: int
    parametric: bool
    exponents: tuple
    generators: np.ndarray
    dofs: tuple
    gamma: tuple
    entity_dofs: tuple
    coeffs: np.ndarray = field(repr=False)

    @property
    def num_basis(self) -> int:
        return len(self.dofs)

    @property
    def degree(self) -> int:
        """Largest total degree among the generator monomials."""
        used = np.any(self.generators != 0, axis=0)
        return max(a + b for (a, b), u in zip(self.exponents, used) if u)

    @property
    def max_derivative(self) -> int:
        return MAX_DERIVATIVE


# monomials -----------------------------------------------------------------

def _falling(n: np.ndarray, k: int) -> np.ndarray:
    out = np.ones_like(n, dtype=float)
    for i in range(k):
        out = out * (n - i)
    return out


def monomial_derivs(exponents, s: np.ndarray, alpha) -> np.ndarray:
    """D^alpha of every monomial s1^a s2^b at points ``s`` (..., 2) -> (..., nmono)."""
    e = np.asarray(exponents, dtype=np.int64)
    a1, a2 = alpha
    c = _falling(e[:, 0], a1) * _falling(e[:, 1], a2)
    p1 = np.maximum(e[:, 0] - a1, 0)
    p2 = np.maximum(e[:, 1] - a2, 0)
    s1 = s[..., 0, None]
    s2 = s[..., 1, None]
    return c * s1 ** p1 * s2 ** p2


def _exponents_total(degree):
    return tuple((k - b, b) for k in range(degree + 1) for b in range(k + 1))


def _exponents_tensor(degree):
    return tuple((a, b) for a in range(degree + 1) for b in range(degree + 1))


def _generators(exponents, polys):
    """Rows of monomial coefficients; each poly is a dict {(a, b): coefficient}."""
    index = {e: i for i, e in enumerate(exponents)}
    g = np.zeros((len(polys), len(exponents)))
    for r, poly in enumerate(polys):
        for e, c in poly.items():
            g[r, index[e]] = c
    return g


# DOF functionals --------------------------------------------------------------

def _edge_endpoints(kind, xy, flips, k):
    a, b = local_edges(kind)[k]
    pa, pb = xy[:, a], xy[:, b]
    f = flips[:, k][:, None]
    return np.where(f, pb, pa), np.where(f, pa, pb)


def apply_dofs(el_kind: str, dofs, xy: np.ndarray, flips: np.ndarray, fn: Callable) -> np.ndarray:
    """Apply DOF functionals on cells with vertex coordinates ``xy`` (nc, nv, 2).

    ``fn(points, alpha)`` evaluates D^alpha of the target function(s) at physical
    points of shape (nc, npts, 2) and returns (nc, npts, *trailing).  The result
    has shape (nc, ndof, *trailing).
    """
    te, we = quadrature.edge_rule(5)
    ref, cell_rule = None, None
    out = []
    for d in dofs:
        if d.kind == "point":
            if d.entity == "vertex":
                p = xy[:, d.index]
            elif d.entity == "edge":
                A, B = _edge_endpoints(el_kind, xy, flips, d.index)
                p = A + d.t * (B - A)
            else:
                p = xy.mean(axis=1)
            out.append(fn(p[:, None, :], (0, 0))[:, 0])
        elif d.kind in ("edge_mean", "edge_normal_mean"):
            A, B = _edge_endpoints(el_kind, xy, flips, d.index)
            pts = A[:, None, :] + te[None, :, None] * (B - A)[:, None, :]
            if d.kind == "edge_mean":
                vals = fn(pts, (0, 0))
            else:
                t = B - A
                n = np.stack([t[:, 1], -t[:, 0]], axis=-1) / np.linalg.norm(t, axis=-1)[:, None]
                gx, gy = fn(pts, (1, 0)), fn(pts, (0, 1))
                shape = (len(n), 1) + (1,) * (gx.ndim - 2)
                vals = n[:, 0].reshape(shape) * gx + n[:, 1].reshape(shape) * gy
            out.append(np.tensordot(vals, we, axes=([1], [0])) if vals.ndim == 2
                       else np.einsum("cq...,q->c...", vals, we))
        elif d.kind == "cell_mean":
            if cell_rule is None:
                cell_rule = quadrature.rule_for(el_kind, 10)
                x, jac = map_coords(el_kind, xy, cell_rule.points)
                det = np.abs(np.linalg.det(jac))
                wdet = cell_rule.weights[None, :] * det
                ref = (x, wdet / wdet.sum(axis=1, keepdims=True))
            x, w = ref
            vals = fn(x, (0, 0))
            out.append(np.einsum("cq...,cq->c...", vals, w))
        else:
            raise ValueError(f"unknown DOF kind {d.kind!r}")
    return np.stack(out, axis=1)


def _monomial_fn(exponents, center, scale):
    def fn(pts, alpha):
        s = (pts - center[:, None, :]) / scale[:, None, None]
        return monomial_derivs(exponents, s, alpha) * scale[:, None, None] ** -(alpha[0] + alpha[1])
    return fn


def basis_coefficients(el: ReferenceElement, xy, flips, center, scale) -> np.ndarray:
    """Monomial coefficients of the nodal basis on each cell, shape (nc, nb, nmono)."""
    table = apply_dofs(el.cell_kind, el.dofs, xy, flips, _monomial_fn(el.exponents, center, scale))
    lmat = table @ el.generators.T  # (nc, ndof, ngen): functional i on generator k
    if lmat.shape[1] != lmat.shape[2]:
        raise ValueError(f"{el.family}: {lmat.shape[1]} DOFs for {lmat.shape[2]} generators")
    gen = np.swapaxes(np.linalg.inv(lmat), 1, 2)  # (nc, nb, ngen)
    return gen @ el.generators


def dof_matrix(el: ReferenceElement) -> np.ndarray:
    """DOF functionals applied to the reference basis; the identity for unisolvent elements."""
    xy, flips = _reference_geometry(el.cell_kind)
    fn = _monomial_fn(el.exponents, np.zeros((1, 2)), np.ones(1))
    table = apply_dofs(el.cell_kind, el.dofs, xy, flips, fn)[0]  # (ndof, nmono)
    return table @ el.coeffs.T


def _reference_geometry(kind):
    xy = REFERENCE_VERTICES[kind][None, :, :]
    pairs = local_edges(kind)
    flips = (pairs[:, 0] > pairs[:, 1])[None, :]
    return xy, flips


# catalog ----------------------------------------------------------------------

def _lagrange_dofs(kind, k):
    nv = 3 if kind == TRIANGLE else 4
    dofs = [Dof("point", "vertex", i) for i in range(nv)]
    for e in range(nv):
        for j in range(k - 1):
            dofs.append(Dof("point", "edge", e, j, (j + 1) / k))
    ncell = {1: 0, 2: 0, 3: 1}[k] if kind == TRIANGLE else (k - 1) ** 2
    dofs += [Dof("point", "cell", 0, j) for j in range(ncell)]
    return dofs, (1, k - 1, ncell)


def _edge_mean_dofs(ne, cell_mean):
    dofs = [Dof("edge_mean", "edge", e) for e in range(ne)]
    if cell_mean:
        dofs.append(Dof("cell_mean", "cell", 0))
    return dofs, (0, 1, int(cell_mean))


def _polys_identity(exps):
    return [{e: 1.0} for e in exps]


_P1 = [{(0, 0): 1.0}, {(1, 0): 1.0}, {(0, 1): 1.0}]


def _spec(family):
    """(kind, r, conformity, parametric, exponents, generator polys, dofs, entity counts, Gamma)."""
    if family in ("P1", "P2", "P3"):
        k = int(family[1])
        exps = _exponents_total(k)
        dofs, ent = _lagrange_dofs(TRIANGLE, k)
        return TRIANGLE, k + 1, 1, False, exps, _polys_identity(exps), dofs, ent, multi_indices(k + 1)
    if family in ("Q1", "Q2"):
        k = int(family[1])
        exps = _exponents_tensor(k)
        dofs, ent = _lagrange_dofs(QUADRILATERAL, k)
        gamma = [MultiIndex(k + 1, 0), MultiIndex(0, k + 1)]
        return QUADRILATERAL, k + 1, 1, True, exps, _polys_identity(exps), dofs, ent, gamma
    if family == "CR":
        exps = _exponents_total(1)
        dofs, ent = _edge_mean_dofs(3, False)
        return TRIANGLE, 2, 0, False, exps, _polys_identity(exps), dofs, ent, multi_indices(2)
    exps2 = _exponents_total(2)
    mixed = [MultiIndex(1, 1)]
    if family == "ECR":
        polys = _P1 + [{(2, 0): 1.0, (0, 2): 1.0}]
        dofs, ent = _edge_mean_dofs(3, True)
        return TRIANGLE, 2, 0, False, exps2, polys, dofs, ent, mixed
    if family == "Q1ROT":
        polys = _P1 + [{(2, 0): 1.0, (0, 2): -1.0}]
        dofs, ent = _edge_mean_dofs(4, False)
        return QUADRILATERAL, 2, 0, False, exps2, polys, dofs, ent, mixed
    if family == "EQ1ROT":
        polys = _P1 + [{(2, 0): 1.0}, {(0, 2): 1.0}]
        dofs, ent = _edge_mean_dofs(4, True)
        return QUADRILATERAL, 2, 0, False, exps2, polys, dofs, ent, mixed
    if family == "MORLEY":
        dofs = [Dof("point", "vertex", i) for i in range(3)]
        dofs += [Dof("edge_normal_mean", "edge", e) for e in range(3)]
        return TRIANGLE, 3, 0, False, exps2, _polys_identity(exps2), dofs, (1, 1, 0), multi_indices(3)
    raise ValueError(f"unknown element family {family!r}; expected one of {', '.join(FAMILIES)}")


@lru_cache(maxsize=None)
def reference_element(family: str) -> ReferenceElement:
    family = family.upper()
    kind, r, conf, param, exps, polys, dofs, ent, gamma = _spec(family)
    gens = _generators(exps, polys)
    gens.setflags(write=False)
    el = ReferenceElement(family, kind, r, conf, param, exps, gens, tuple(dofs), tuple(gamma), ent,
                          coeffs=np.empty((0, len(exps))))
    xy, flips = _reference_geometry(kind)
    coeffs = basis_coefficients(el, xy, flips, np.zeros((1, 2)), np.ones(1))[0]
    coeffs.setflags(write=False)
    object.__setattr__(el, "coeffs", coeffs)
    return el


def eval_deriv(el: ReferenceElement, basis_index: int, alpha, ref_point) -> float:
    """Exact D^alpha of a reference basis function at a reference point."""
    alpha = _as_index(alpha)
    if alpha.length > MAX_DERIVATIVE:
        raise ValueError(f"derivatives of order {alpha.length} > {MAX_DERIVATIVE} are not supported")
    s = np.asarray(ref_point, dtype=float).reshape(1, 2)
    return float(monomial_derivs(el.exponents, s, alpha)[0] @ el.coeffs[basis_index])


def reference_derivs(el: ReferenceElement, ref_points: np.ndarray, alpha) -> np.ndarray:
    """D^alpha of all reference basis functions, shape (npts, nb)."""
    return monomial_derivs(el.exponents, np.asarray(ref_points, dtype=float), alpha) @ el.coeffs.T


def factorial_weight(alpha) -> float:
    """Multinomial weight |alpha|! / alpha! ."""
    a1, a2 = alpha
    return math.factorial(a1 + a2) / (math.factorial(a1) * math.factorial(a2))
