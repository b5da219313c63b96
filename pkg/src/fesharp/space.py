"""Global finite element spaces over a mesh.

Global DOFs are numbered vertex block first, then edges, then cells.  A DOF
on a shared entity is the same functional seen from every neighbouring cell
(edge points and Morley normals use the global edge orientation), so the
cellwise DOF interpolant is a member of the global space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .elements import (
    MAX_DERIVATIVE,
    MultiIndex,
    ReferenceElement,
    _as_index,
    apply_dofs,
    basis_coefficients,
    monomial_derivs,
    reference_derivs,
    reference_element,
)
from .mesh import TRIANGLE, Mesh, bilinear_twist, map_points


# gamma checks for P3 need order 4; public point evaluation stops at MAX_DERIVATIVE
MAX_TABULATE = 4


class SpaceError(ValueError):
    pass


@dataclass
class Tabulation:
    """Physical basis derivatives at mapped reference points of a block of cells."""
    cells: np.ndarray
    x: np.ndarray  # (nc, nq, 2)
    det: np.ndarray  # (nc, nq), |det J|
    derivs: dict  # MultiIndex -> (nc, nq, nb)


def all_indices(order: int) -> list[MultiIndex]:
    return [MultiIndex(k - b, b) for k in range(order + 1) for b in range(k + 1)]


@lru_cache(maxsize=None)
def _jet_product_table(order):
    exps = all_indices(order)
    index = {e: i for i, e in enumerate(exps)}
    table = []
    for i, a in enumerate(exps):
        for j, b in enumerate(exps):
            c = (a[0] + b[0], a[1] + b[1])
            if c in index:
                table.append((i, j, index[c]))
    return exps, table


def _jet_mul(a, b, table):
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for i, j, k in table:
        out[..., k] += a[..., i] * b[..., j]
    return out


def pushforward_matrix(jac: np.ndarray, twist: np.ndarray, order: int) -> np.ndarray:
    """Chain-rule matrix for derivatives through a bilinear map, exact to ``order``.

    The map near a point is x0 + J d + twist d1 d2 exactly; its inverse is
    expanded as a truncated Taylor jet, and composing the reference Taylor
    expansion with it gives T with D^a_x phi = sum_b T[a, b] D^b_xi phi.
    Shapes: jac (..., 2, 2), twist (..., 2) -> (..., n, n) with n multi-indices
    of length <= order, ordered as ``all_indices(order)``.
    """
    exps, table = _jet_product_table(order)
    n = len(exps)
    shape = jac.shape[:-2]
    jinv = np.linalg.inv(jac)
    unit = np.zeros(n)
    unit[0] = 1.0
    e1 = np.zeros(n)
    e2 = np.zeros(n)
    if order >= 1:
        e1[exps.index((1, 0))] = 1.0
        e2[exps.index((0, 1))] = 1.0
    d1 = np.zeros(shape + (n,))
    d2 = np.zeros(shape + (n,))
    tx, ty = twist[..., 0, None], twist[..., 1, None]
    for _ in range(order):
        q = _jet_mul(d1, d2, table)
        r1 = e1 - tx * q
        r2 = e2 - ty * q
        d1 = jinv[..., 0, 0, None] * r1 + jinv[..., 0, 1, None] * r2
        d2 = jinv[..., 1, 0, None] * r1 + jinv[..., 1, 1, None] * r2
    pow1 = [np.broadcast_to(unit, shape + (n,))]
    pow2 = [np.broadcast_to(unit, shape + (n,))]
    for _ in range(order):
        pow1.append(_jet_mul(pow1[-1], d1, table))
        pow2.append(_jet_mul(pow2[-1], d2, table))
    tmat = np.zeros(shape + (n, n))
    for jb, (b1, b2) in enumerate(exps):
        jet = _jet_mul(pow1[b1], pow2[b2], table) / (math.factorial(b1) * math.factorial(b2))
        for ja, (a1, a2) in enumerate(exps):
            tmat[..., ja, jb] = jet[..., ja] * (math.factorial(a1) * math.factorial(a2))
    return tmat


class FESpace:
    """Finite element space of one element family on a mesh."""

    def __init__(self, mesh: Mesh, element: ReferenceElement, essential_order: int = 0):
        if element.cell_kind != mesh.kind:
            raise SpaceError(f"{element.family} lives on {element.cell_kind}s, mesh has {mesh.kind}s")
        if essential_order not in (0, 1, 2):
            raise SpaceError(f"essential_order must be 0, 1 or 2, got {essential_order!r}")
        self.mesh = mesh
        self.element = element
        self.essential_order = essential_order
        self._cache = {}
        dv, de, dc = element.entity_dofs
        nv, ne, nc = mesh.num_vertices, mesh.num_edges, mesh.num_cells
        self.num_dofs = nv * dv + ne * de + nc * dc
        cell_dofs = np.empty((nc, element.num_basis), dtype=np.int64)
        kind = np.empty(self.num_dofs, dtype=object)
        on_boundary = np.zeros(self.num_dofs, dtype=bool)
        for i, d in enumerate(element.dofs):
            if d.entity == "vertex":
                g = mesh.cells[:, d.index] * dv + d.sub
                bnd = mesh.boundary_vertices[mesh.cells[:, d.index]]
            elif d.entity == "edge":
                e = mesh.cell_edges[:, d.index]
                g = nv * dv + e * de + d.sub
                bnd = mesh.boundary_edges[e]
            else:
                g = nv * dv + ne * de + np.arange(nc) * dc + d.sub
                bnd = np.zeros(nc, dtype=bool)
            cell_dofs[:, i] = g
            kind[g] = d.kind
            on_boundary[g] = bnd
        cell_dofs.setflags(write=False)
        self.cell_dofs = cell_dofs
        constrained = np.zeros(self.num_dofs, dtype=bool)
        if essential_order >= 1:
            constrained |= on_boundary & np.isin(kind, ["point", "edge_mean"])
        if essential_order >= 2:
            constrained |= on_boundary & (kind == "edge_normal_mean")
        constrained.setflags(write=False)
        self.constrained = constrained
        self.dof_kinds = kind
        if not element.parametric:
            xy = mesh.cell_coords()
            self.center = xy.mean(axis=1)
            self.scale = mesh.cell_diameters.copy()
            self.coeffs = basis_coefficients(element, xy, mesh.cell_edge_flip, self.center, self.scale)

    @property
    def free(self) -> np.ndarray:
        return ~self.constrained

    @property
    def num_free(self) -> int:
        return int(np.count_nonzero(~self.constrained))

    def __repr__(self):
        return (f"FESpace({self.element.family}, {self.mesh.num_cells} {self.mesh.kind}s, "
                f"{self.num_dofs} dofs, {self.num_free} free)")

    def tabulate(self, ref_points, alphas, cells=None) -> Tabulation:
        alphas = [_as_index(a) for a in alphas]
        top = max((a.length for a in alphas), default=0)
        if top > MAX_TABULATE:
            raise SpaceError(f"derivatives of order {top} > {MAX_TABULATE} are not supported")
        ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
        cells = np.arange(self.mesh.num_cells) if cells is None else np.asarray(cells)
        x, jac = map_points(self.mesh, ref_points, cells)
        det = np.abs(np.linalg.det(jac))
        el = self.element
        derivs = {}
        if el.parametric:
            order = top
            idx = all_indices(order)
            ref = np.stack([reference_derivs(el, ref_points, b) for b in idx])  # (nb_idx, nq, nb)
            tmat = pushforward_matrix(jac, bilinear_twist(self.mesh, cells)[:, None, :], order)
            for a in alphas:
                derivs[a] = np.einsum("cqb,bqn->cqn", tmat[:, :, idx.index(a), :], ref)
        else:
            c, h = self.center[cells], self.scale[cells]
            s = (x - c[:, None, :]) / h[:, None, None]
            coeffs = self.coeffs[cells]
            for a in alphas:
                mono = monomial_derivs(el.exponents, s, a) * h[:, None, None] ** -a.length
                derivs[a] = np.einsum("cqm,cbm->cqb", mono, coeffs)
        return Tabulation(cells, x, det, derivs)


def build(mesh: Mesh, family: str, essential_order: int = 0) -> FESpace:
    return FESpace(mesh, reference_element(family), essential_order)


@dataclass
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.num_dofs,):
            raise SpaceError(f"expected {self.space.num_dofs} coefficients, got shape {self.coeffs.shape}")

    def local(self, cells=None) -> np.ndarray:
        cd = self.space.cell_dofs if cells is None else self.space.cell_dofs[cells]
        return self.coeffs[cd]

    def derivs(self, tab: Tabulation, alpha) -> np.ndarray:
        """D^alpha of the function at the tabulated points, shape (nc, nq)."""
        return np.einsum("cqb,cb->cq", tab.derivs[_as_index(alpha)], self.local(tab.cells))


def zero_function(space: FESpace) -> FEFunction:
    return FEFunction(space, np.zeros(space.num_dofs))


def _callable_fn(u):
    def fn(pts, alpha):
        return np.asarray(u(pts[..., 0], pts[..., 1], alpha), dtype=float)
    return fn


def interpolate(s: FESpace, u) -> FEFunction:
    """Cellwise DOF interpolant of ``u(x, y, alpha)``; constrained DOFs are set to 0."""
    mesh = s.mesh
    local = apply_dofs(mesh.kind, s.element.dofs, mesh.cell_coords(), mesh.cell_edge_flip, _callable_fn(u))
    coeffs = np.zeros(s.num_dofs)
    coeffs[s.cell_dofs] = local
    coeffs[s.constrained] = 0.0
    return FEFunction(s, coeffs)


def eval(f: FEFunction, cell: int, ref_point, alpha=(0, 0)) -> float:  # noqa: A001
    """D^alpha of ``f`` restricted to ``cell`` at the image of ``ref_point``."""
    alpha = _as_index(alpha)
    if alpha.length > MAX_DERIVATIVE:
        raise SpaceError(f"derivatives of order {alpha.length} > {MAX_DERIVATIVE} are not supported")
    tab = f.space.tabulate(np.asarray(ref_point, dtype=float)[None, :], [alpha], cells=[cell])
    return float(f.derivs(tab, alpha)[0, 0])


def sample_points(kind: str) -> np.ndarray:
    """Seven interior and edge sample points per reference cell."""
    if kind == TRIANGLE:
        return np.array([[1 / 3, 1 / 3], [1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3],
                         [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
    return np.array([[0.0, 0.0], [0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5],
                     [1.0, 0.3], [-0.2, -1.0]])


def check_vanishing(s: FESpace, gamma, trials: int = 3, seed: int = 0) -> float:
    """Max |D^gamma v_h| over random coefficient vectors in [-1, 1], all cells, 7 points per cell."""
    gamma = _as_index(gamma)
    rng = np.random.default_rng(seed)
    tab = s.tabulate(sample_points(s.mesh.kind), [gamma])
    worst = 0.0
    for _ in range(trials):
        c = rng.uniform(-1.0, 1.0, s.num_dofs)
        c[s.constrained] = 0.0
        worst = max(worst, float(np.max(np.abs(FEFunction(s, c).derivs(tab, gamma)))))
    return worst
