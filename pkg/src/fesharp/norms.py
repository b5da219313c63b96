"""Broken Sobolev norms of u - v_h and the weighted per-cell sums.

All integrals use the fixed high-order norm rule (degree 10 on triangles,
degree 11 on squares), so quadrature error stays far below the h^(r-j)
floors being measured.  The full broken norm is

    ||v||_{j,p,G,h} = ( sum_{l<=j} |v|_{l,p,G,h}^p )^(1/p)

and max over l for p = inf.  Only cells K contained in G contribute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import NORM_DEGREE, cell_blocks, norm_rule
from .elements import MAX_DERIVATIVE, multi_indices
from .mesh import REFERENCE_VERTICES, TRIANGLE, Mesh, local_edges
from .quadrature import rule_for
from .space import FEFunction, FESpace

REGION_SLACK = 1e-12
INF = math.inf


class NormError(ValueError):
    pass


Region = Optional[tuple]  # (x0, x1, y0, y1) or None for the whole square


@dataclass(frozen=True)
class NormSpec:
    j: int
    p: float = 2
    region: Region = None
    seminorm: bool = False

    def __post_init__(self):
        if self.j < 0 or self.j > MAX_DERIVATIVE:
            raise NormError(f"derivative order j must be in 0..{MAX_DERIVATIVE}, got {self.j!r}")
        if self.p not in (1, 2, INF):
            raise NormError(f"p must be 1, 2 or inf, got {self.p!r}")
        if self.region is not None:
            check_region(self.region)

    @property
    def label(self) -> str:
        p = "inf" if self.p == INF else str(int(self.p))
        return f"{'semi' if self.seminorm else 'norm'}_j{self.j}_p{p}"


def check_region(region, interior: bool = False):
    x0, x1, y0, y1 = (float(v) for v in region)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise NormError(f"region {region!r} is not a sub-rectangle of the unit square")
    if interior and (x0 <= 0.0 or y0 <= 0.0 or x1 >= 1.0 or y1 >= 1.0):
        raise NormError(f"region {region!r} touches the boundary; interior subdomains need G compactly inside")
    return x0, x1, y0, y1


def region_cells(m: Mesh, region: Region) -> np.ndarray:
    """Indices of cells K with K contained in G (cells are convex, so vertices decide)."""
    if region is None:
        return np.arange(m.num_cells)
    x0, x1, y0, y1 = check_region(region)
    xy = m.cell_coords()
    inside = ((xy[..., 0] >= x0 - REGION_SLACK) & (xy[..., 0] <= x1 + REGION_SLACK)
              & (xy[..., 1] >= y0 - REGION_SLACK) & (xy[..., 1] <= y1 + REGION_SLACK))
    return np.flatnonzero(inside.all(axis=1))


def _zero(x, y, alpha=(0, 0)):
    return np.zeros(np.broadcast(x, y).shape)


def _errors_at(space: FESpace, u, v_h, ref_points, order: int, cells):
    """Yield (cells, tab, {alpha: D^alpha (u - v_h)}) per block for all |alpha| <= order."""
    u = _zero if u is None else u
    alphas = [a for ell in range(order + 1) for a in multi_indices(ell)]
    for blk in cell_blocks(len(cells)):
        c = cells[blk]
        tab = space.tabulate(ref_points, alphas, c)
        x, y = tab.x[..., 0], tab.x[..., 1]
        errs = {}
        for a in alphas:
            e = np.broadcast_to(np.asarray(u(x, y, a), dtype=float), x.shape)
            if v_h is not None:
                e = e - v_h.derivs(tab, a)
            errs[a] = e
        yield c, tab, errs


def cell_seminorms(space: FESpace, u, v_h: FEFunction | None, j: int, p, cells=None,
                   lattice_level: int = 0) -> np.ndarray:
    """Per-cell |u - v_h|_{l,p,K} for l = 0..j, shape (j + 1, ncells).

    For p < inf this is (int_K sum_{|alpha|=l} |D^alpha e|^p)^(1/p); for p = inf
    it is max_{|alpha|=l} max over the sampling lattice, a lower estimate of the sup.
    """
    if j > MAX_DERIVATIVE:
        raise NormError(f"j = {j} exceeds the supported derivative order {MAX_DERIVATIVE}")
    cells = np.arange(space.mesh.num_cells) if cells is None else np.asarray(cells, dtype=np.int64)
    out = np.zeros((j + 1, len(cells)))
    if len(cells) == 0:
        return out
    if p == INF:
        pts = sup_lattice(space.mesh.kind, lattice_level)
    else:
        rule = norm_rule(space)
        pts = rule.points
    pos = 0
    for c, tab, errs in _errors_at(space, u, v_h, pts, j, cells):
        nc = len(c)
        for ell in range(j + 1):
            if p == INF:
                vals = np.max([np.max(np.abs(errs[a]), axis=1) for a in multi_indices(ell)], axis=0)
            else:
                dens = sum(np.abs(errs[a]) ** p for a in multi_indices(ell))
                vals = np.sum(tab.det * rule.weights[None, :] * dens, axis=1) ** (1.0 / p)
            out[ell, pos:pos + nc] = vals
        pos += nc
    return out


def _combine(per_cell: np.ndarray, p) -> float:
    """Sum a (ncells,) array of local values into the global p-norm."""
    if per_cell.size == 0:
        return 0.0
    if p == INF:
        return float(np.max(per_cell))
    return float(np.sum(per_cell ** p) ** (1.0 / p))


def broken_error(space: FESpace, u, v_h: FEFunction | None, spec: NormSpec, lattice_level: int = 0) -> float:
    """||u - v_h||_{j,p,G,h} (or the seminorm when ``spec.seminorm``).

    ``u`` is called as u(x, y, alpha); None stands for u = 0, and v_h = None for v_h = 0.
    """
    cells = region_cells(space.mesh, spec.region)
    local = cell_seminorms(space, u, v_h, spec.j, spec.p, cells, lattice_level)
    semis = [_combine(local[ell], spec.p) for ell in range(spec.j + 1)]
    if spec.seminorm:
        return semis[-1]
    if spec.p == INF:
        return max(semis)
    return float(sum(s ** spec.p for s in semis) ** (1.0 / spec.p))


def cell_errors(space: FESpace, u, v_h: FEFunction | None, j: int, q, cells=None, lattice_level: int = 0):
    """Per-cell full norms ||u - v_h||_{j,q,K}."""
    local = cell_seminorms(space, u, v_h, j, q, cells, lattice_level)
    if q == INF:
        return local.max(axis=0)
    return np.sum(local ** q, axis=0) ** (1.0 / q)


def weighted_exponent(j: int, r: int, p, q, n: int = 2) -> float:
    """p((j - r) + n(1/p - 1/q)) with 1/inf = 0."""
    inv = lambda t: 0.0 if t == INF else 1.0 / t  # noqa: E731
    return p * ((j - r) + n * (inv(p) - inv(q)))


def weighted_error(space: FESpace, u, v_h: FEFunction | None, j: int, r: int, p, q,
                   region: Region = None) -> float:
    """( sum_{K in T_h^G} h_K^{p((j-r)+2(1/p-1/q))} ||u - v_h||_{j,q,K}^p )^(1/p)."""
    if p == INF or p not in (1, 2):
        raise NormError(f"weighted sums need 1 <= p < inf with p in (1, 2), got {p!r}")
    if q not in (1, 2, INF):
        raise NormError(f"q must be 1, 2 or inf, got {q!r}")
    cells = region_cells(space.mesh, region)
    if len(cells) == 0:
        return 0.0
    local = cell_errors(space, u, v_h, j, q, cells)
    hk = space.mesh.cell_diameters[cells]
    total = np.sum(hk ** weighted_exponent(j, r, p, q) * local ** p)
    return float(total ** (1.0 / p))


def sharpness_ratio(E: float, h: float, r: int, j: int) -> float:
    if h <= 0:
        raise NormError(f"h must be positive, got {h!r}")
    return E / h ** (r - j)


def sup_lattice(kind: str, level: int = 0) -> np.ndarray:
    """Reference sampling points for sup-norm estimates.

    Level 0 is the norm-rule nodes plus vertices and edge midpoints.  Level k
    adds the level-0 lattice mapped into each of the 4^k uniform subcells, so
    lattices are nested and the reported max never drops as the level grows.
    """
    rule = norm_rule_points(kind)
    ref = REFERENCE_VERTICES[kind]
    edges = local_edges(kind)
    base = np.vstack([rule, ref, 0.5 * (ref[edges[:, 0]] + ref[edges[:, 1]])])
    pts = [base]
    maps = [(np.zeros(2), np.eye(2))]
    for _ in range(level):
        maps = [(a + lin @ c, lin @ d) for a, lin in maps for c, d in _children(kind)]
        pts.extend(a + base @ lin.T for a, lin in maps)
    return np.vstack(pts)


def norm_rule_points(kind: str) -> np.ndarray:
    return rule_for(kind, NORM_DEGREE[kind]).points


def _children(kind):
    """Affine maps x -> c + D x from the reference cell onto its 4 uniform children."""
    if kind == TRIANGLE:
        h = 0.5 * np.eye(2)
        return [(np.zeros(2), h), (np.array([0.5, 0.0]), h), (np.array([0.0, 0.5]), h),
                (np.array([0.5, 0.5]), -h)]
    h = 0.5 * np.eye(2)
    return [(np.array([sx, sy]) * 0.5, h) for sx in (-1, 1) for sy in (-1, 1)]


def discrete_norm(v_h: FEFunction, j: int, p=2, seminorm: bool = False) -> float:
    return broken_error(v_h.space, None, v_h, NormSpec(j, p, None, seminorm))


def inverse_inequality_constant(space: FESpace, j: int = 0, k: int | None = None, samples: int = 20,
                                seed: int = 0) -> float:
    """Largest observed |v_h|_{k,2,h} h^(k-j) / ||v_h||_{j,2,h} over random v_h (k defaults to r-1).

    Coefficients are uniform in [-1, 1] with constrained DOFs zeroed.
    """
    k = space.element.order - 1 if k is None else k
    if not 0 <= j <= k <= MAX_DERIVATIVE:
        raise NormError(f"need 0 <= j <= k <= {MAX_DERIVATIVE}, got j={j}, k={k}")
    h = float(np.max(space.mesh.cell_diameters))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        c = rng.uniform(-1.0, 1.0, space.num_dofs)
        c[space.constrained] = 0.0
        v = FEFunction(space, c)
        worst = max(worst, discrete_norm(v, k, 2, seminorm=True) * h ** (k - j) / discrete_norm(v, j, 2))
    return worst
