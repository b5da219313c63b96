"""Triangulations and quadrangulations of the unit square.

Cells are stored counter-clockwise.  Local edge ``i`` of a triangle is the edge
opposite local vertex ``i``; local edge ``i`` of a quadrilateral joins local
vertices ``i`` and ``i + 1``.  Global edges are oriented from the smaller to
the larger vertex index, which fixes the direction of edge-interior Lagrange
nodes and of the Morley normals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

TRIANGLE = "triangle"
QUADRILATERAL = "quadrilateral"

_LOCAL_EDGES = {
    TRIANGLE: np.array([[1, 2], [2, 0], [0, 1]]),
    QUADRILATERAL: np.array([[0, 1], [1, 2], [2, 3], [3, 0]]),
}

REFERENCE_VERTICES = {
    TRIANGLE: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    QUADRILATERAL: np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
}


class MeshError(ValueError):
    pass


def local_edges(kind: str) -> np.ndarray:
    return _LOCAL_EDGES[kind]


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    cells: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in _LOCAL_EDGES:
            raise MeshError(f"unknown cell kind {self.kind!r}")
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64))
        nv = 3 if self.kind == TRIANGLE else 4
        if self.cells.ndim != 2 or self.cells.shape[1] != nv:
            raise MeshError(f"{self.kind} cells need {nv} vertices each")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _topology(self):
        loc = _LOCAL_EDGES[self.kind]
        pairs = self.cells[:, loc]  # (nc, ne, 2)
        flip = pairs[..., 0] > pairs[..., 1]
        key = np.sort(pairs, axis=-1).reshape(-1, 2)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(pairs.shape[:2])
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two cells")
        edge_cells = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse.ravel(), kind="stable")
        owners = np.repeat(np.arange(self.num_cells), loc.shape[0])[order]
        sorted_edges = inverse.ravel()[order]
        first = np.ones(len(sorted_edges), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_cells[sorted_edges[first], 0] = owners[first]
        edge_cells[sorted_edges[~first], 1] = owners[~first]
        return (_frozen(edges, np.int64), _frozen(edge_cells, np.int64),
                _frozen(inverse, np.int64), _frozen(flip, bool))

    @property
    def edges(self) -> np.ndarray:
        """Global edges as (E, 2) vertex pairs, smaller index first."""
        return self._topology[0]

    @property
    def edge_cells(self) -> np.ndarray:
        """(left cell, right cell) per edge; the right cell is -1 on the boundary."""
        return self._topology[1]

    @property
    def cell_edges(self) -> np.ndarray:
        return self._topology[2]

    @property
    def cell_edge_flip(self) -> np.ndarray:
        """True where the local edge runs against the global orientation."""
        return self._topology[3]

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_cells[:, 1] < 0

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        flags = np.zeros(self.num_vertices, dtype=bool)
        flags[self.edges[self.boundary_edges].ravel()] = True
        flags.setflags(write=False)
        return flags

    @property
    def faces(self):
        """(vertex pair, left cell, right cell or None) for every edge."""
        return [((int(a), int(b)), int(l), None if r < 0 else int(r))
                for (a, b), (l, r) in zip(self.edges, self.edge_cells)]

    def cell_coords(self, cells=None) -> np.ndarray:
        """Vertex coordinates per cell, shape (nc, nv, 2)."""
        c = self.cells if cells is None else self.cells[cells]
        return self.vertices[c]

    @cached_property
    def cell_areas(self) -> np.ndarray:
        xy = self.cell_coords()
        x, y = xy[..., 0], xy[..., 1]
        a = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
        a.setflags(write=False)
        return a

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        xy = self.cell_coords()
        d = xy[:, :, None, :] - xy[:, None, :, :]
        h = np.sqrt(np.max(np.sum(d * d, axis=-1), axis=(1, 2)))
        h.setflags(write=False)
        return h

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        out = np.hypot(d[:, 0], d[:, 1])
        out.setflags(write=False)
        return out

    def validate(self, area_tol: float = 1e-12) -> None:
        """Raise MeshError unless every Mesh invariant holds."""
        if np.any(self.cells < 0) or np.any(self.cells >= self.num_vertices):
            raise MeshError("cell references an unknown vertex")
        if np.any(self.cell_areas <= 0):
            raise MeshError("cell with non-positive signed area")
        if self.kind == QUADRILATERAL:
            for q in (-0.5, 0.5):
                _, jac = map_points(self, np.array([[q, q], [q, -q]]))
                if np.any(np.linalg.det(jac) <= 0):
                    raise MeshError("quadrilateral with non-positive Jacobian")
        if abs(self.cell_areas.sum() - 1.0) > area_tol:
            raise MeshError(f"cells do not tile the unit square (area {self.cell_areas.sum()!r})")
        be = self.edges[self.boundary_edges]
        pts = self.vertices[be]
        on_side = np.zeros(len(be), dtype=bool)
        for axis in (0, 1):
            for side in (0.0, 1.0):
                on_side |= np.all(np.abs(pts[..., axis] - side) < 1e-12, axis=1)
        if not np.all(on_side):
            raise MeshError("a boundary edge does not lie on the boundary of the unit square")
        ec = self.edge_cells
        for col in (0, 1):
            has = ec[:, col] >= 0
            owners = ec[has, col]
            edges = np.nonzero(has)[0]
            if not np.all(np.any(self.cell_edges[owners] == edges[:, None], axis=1)):
                raise MeshError("edge-to-cell adjacency is inconsistent")

    # text format -----------------------------------------------------------

    def write(self, path) -> None:
        kind = "tri" if self.kind == TRIANGLE else "quad"
        lines = [f"vertices {self.num_vertices} cells {self.num_cells} kind {kind}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines += [" ".join(str(int(v)) for v in c) for c in self.cells]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "Mesh":
        text = Path(path).read_text().split("\n")
        head = text[0].split()
        if len(head) != 6 or head[0] != "vertices" or head[2] != "cells" or head[4] != "kind":
            raise MeshError(f"{path}: malformed header {text[0]!r}")
        nv, nc = int(head[1]), int(head[3])
        kind = {"tri": TRIANGLE, "quad": QUADRILATERAL}.get(head[5])
        if kind is None:
            raise MeshError(f"{path}: unknown kind {head[5]!r}")
        verts = np.array([[float(t) for t in line.split()] for line in text[1:1 + nv]]).reshape(nv, 2)
        cells = np.array([[int(t) for t in line.split()] for line in text[1 + nv:1 + nv + nc]], dtype=np.int64)
        return cls(verts, cells.reshape(nc, -1), kind)


@dataclass(frozen=True)
class MeshQuality:
    h: float
    h_min: float
    sigma: float
    beta: float


def inradius(m: Mesh) -> np.ndarray:
    """Exact inscribed radius for triangles (area over semiperimeter)."""
    if m.kind != TRIANGLE:
        return inradius_approx(m)
    xy = m.cell_coords()
    sides = np.linalg.norm(xy - np.roll(xy, -1, axis=1), axis=-1)
    return m.cell_areas / (0.5 * sides.sum(axis=1))


def _segment_distance(p0, p1, q0, q1):
    def point_seg(p, a, b):
        ab = b - a
        t = np.clip(np.sum((p - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
        return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)

    return np.minimum.reduce([point_seg(p0, q0, q1), point_seg(p1, q0, q1),
                              point_seg(q0, p0, p1), point_seg(q1, p0, p1)])


def inradius_approx(m: Mesh) -> np.ndarray:
    """Quadrilateral inscribed radius, approximated as half the smaller distance
    between opposite edges (exact for rectangles)."""
    if m.kind == TRIANGLE:
        return inradius(m)
    xy = m.cell_coords()
    d02 = _segment_distance(xy[:, 0], xy[:, 1], xy[:, 2], xy[:, 3])
    d13 = _segment_distance(xy[:, 1], xy[:, 2], xy[:, 3], xy[:, 0])
    return 0.5 * np.minimum(d02, d13)


def quality(m: Mesh) -> MeshQuality:
    hk = m.cell_diameters
    tau = inradius(m)
    h, h_min = float(hk.max()), float(hk.min())
    return MeshQuality(h=h, h_min=h_min, sigma=float(np.min(tau / hk)), beta=h / h_min)


# generators ----------------------------------------------------------------

def _check_n(n, low=1):
    if int(n) != n or n < low:
        raise MeshError(f"cells per side must be an integer >= {low}, got {n!r}")
    return int(n)


def _grid(xs, ys, kind):
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    v00 = (j * (nx + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
    if kind == QUADRILATERAL:
        cells = np.column_stack([v00, v10, v11, v01])
    elif kind == TRIANGLE:
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    else:
        raise MeshError(f"unknown cell kind {kind!r}")
    return Mesh(verts, cells, kind)


def build_structured(n: int, kind: str = TRIANGLE) -> Mesh:
    """n x n squares of side 1/n; triangles split along the lower-left to upper-right diagonal."""
    n = _check_n(n)
    xs = np.arange(n + 1) / n
    return _grid(xs, xs, kind)


def grade_toward_corner(n: int, mu: float) -> Mesh:
    """Structured triangle mesh radially graded toward the origin.

    Vertices are moved by x -> x * |x|_inf^(1/mu - 1).  Along both axes the grid
    coordinates become (i/n)^(1/mu); the max-norm radial map keeps every cell
    shape regular for fixed mu, while h/h_min grows like n^(1/mu - 1).
    """
    n = _check_n(n, low=2)
    if not (0.0 < mu <= 1.0):
        raise MeshError(f"grading exponent must lie in (0, 1], got {mu!r}")
    base = build_structured(n, TRIANGLE)
    if mu == 1.0:
        return base
    v = base.vertices
    rho = np.max(np.abs(v), axis=1)
    k = 1.0 / mu - 1.0
    scale = np.where(rho > 0, rho ** k, 0.0)
    graded = v * scale[:, None]
    axis_pts = v[:, 1] == 0.0
    graded[axis_pts, 0] = v[axis_pts, 0] ** (1.0 / mu)
    axis_pts = v[:, 0] == 0.0
    graded[axis_pts, 1] = v[axis_pts, 1] ** (1.0 / mu)
    return Mesh(graded, base.cells, TRIANGLE)


def refine_uniform(m: Mesh) -> Mesh:
    """Split every cell into four by edge midpoints (and centroids for quadrilaterals)."""
    nv, ne = m.num_vertices, m.num_edges
    mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    c = m.cells
    e = m.cell_edges + nv
    if m.kind == TRIANGLE:
        m0, m1, m2 = e[:, 0], e[:, 1], e[:, 2]
        children = np.stack([
            np.column_stack([c[:, 0], m2, m1]),
            np.column_stack([m2, c[:, 1], m0]),
            np.column_stack([m1, m0, c[:, 2]]),
            np.column_stack([m0, m1, m2]),
        ], axis=1).reshape(-1, 3)
        verts = np.vstack([m.vertices, mids])
    else:
        centers = m.cell_coords().mean(axis=1)
        ctr = nv + ne + np.arange(m.num_cells)
        m0, m1, m2, m3 = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
        children = np.stack([
            np.column_stack([c[:, 0], m0, ctr, m3]),
            np.column_stack([m0, c[:, 1], m1, ctr]),
            np.column_stack([ctr, m1, c[:, 2], m2]),
            np.column_stack([m3, ctr, m2, c[:, 3]]),
        ], axis=1).reshape(-1, 4)
        verts = np.vstack([m.vertices, mids, centers])
    return Mesh(verts, children, m.kind)


_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """The splitmix64 finalizer; a fixed 64-bit mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _unit_uniform(seed: int, index: int, stream: int) -> float:
    x = splitmix64((seed & _MASK64) ^ splitmix64((index << 2) | stream))
    return (x >> 11) * 2.0 ** -53


def perturb(m: Mesh, amplitude: float, seed: int = 0) -> Mesh:
    """Move interior vertices by at most ``amplitude`` times their shortest incident edge."""
    if not (0.0 <= amplitude <= 0.3):
        raise MeshError(f"perturbation amplitude must lie in [0, 0.3], got {amplitude!r}")
    if amplitude == 0.0:
        return Mesh(m.vertices.copy(), m.cells.copy(), m.kind)
    shortest = np.full(m.num_vertices, np.inf)
    np.minimum.at(shortest, m.edges[:, 0], m.edge_lengths)
    np.minimum.at(shortest, m.edges[:, 1], m.edge_lengths)
    disp = np.zeros_like(m.vertices)
    for v in np.nonzero(~m.boundary_vertices)[0]:
        radius = math.sqrt(_unit_uniform(seed, int(v), 0))
        angle = 2.0 * math.pi * _unit_uniform(seed, int(v), 1)
        r = amplitude * shortest[v] * radius
        disp[v] = (r * math.cos(angle), r * math.sin(angle))
    halvings = np.zeros(m.num_vertices, dtype=int)
    while True:
        out = Mesh(m.vertices + disp, m.cells, m.kind)
        bad = _bad_cells(out)
        if not np.any(bad):
            return out
        verts = np.unique(m.cells[bad])
        verts = verts[np.any(disp[verts] != 0.0, axis=1)]
        if len(verts) == 0:
            raise MeshError("input mesh has inverted cells")
        halvings[verts] += 1
        disp[verts] *= 0.5
        disp[verts[halvings[verts] > 10]] = 0.0


def _bad_cells(m: Mesh) -> np.ndarray:
    bad = m.cell_areas <= 0
    if m.kind == QUADRILATERAL:
        corners = REFERENCE_VERTICES[QUADRILATERAL]
        _, jac = map_points(m, corners)
        bad |= np.any(np.linalg.det(jac) <= 0, axis=1)
    return bad


# reference maps ------------------------------------------------------------

def _bilinear_shape(ref):
    xi, eta = ref[:, 0], ref[:, 1]
    n = 0.25 * np.stack([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                         (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)], axis=-1)
    dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    deta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return n, dxi, deta


def map_coords(kind: str, xy: np.ndarray, ref: np.ndarray):
    """Map reference points into cells given by vertex coordinates ``xy`` (nc, nv, 2).

    Returns physical points (nc, nq, 2) and Jacobians (nc, nq, 2, 2) with
    ``jac[..., i, k] = d x_i / d xi_k``.
    """
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    nc, nq = len(xy), len(ref)
    if kind == TRIANGLE:
        v0 = xy[:, 0]
        jc = np.stack([xy[:, 1] - v0, xy[:, 2] - v0], axis=-1)  # (nc, 2, 2)
        x = v0[:, None, :] + np.einsum("cik,qk->cqi", jc, ref)
        jac = np.broadcast_to(jc[:, None], (nc, nq, 2, 2))
        return x, jac
    n, dxi, deta = _bilinear_shape(ref)
    x = np.einsum("qv,cvi->cqi", n, xy)
    jac = np.stack([np.einsum("qv,cvi->cqi", dxi, xy), np.einsum("qv,cvi->cqi", deta, xy)], axis=-1)
    return x, jac


def map_points(m: Mesh, ref: np.ndarray, cells=None):
    """Map reference points into (a subset of) the cells of ``m``; see map_coords."""
    return map_coords(m.kind, m.cell_coords(cells), ref)


def bilinear_twist(m: Mesh, cells=None) -> np.ndarray:
    """d^2 x / (d xi d eta) per quadrilateral, shape (nc, 2); zero for parallelograms."""
    xy = m.cell_coords(cells)
    return 0.25 * (xy[:, 0] - xy[:, 1] + xy[:, 2] - xy[:, 3])


def cell_map(m: Mesh, cell: int, ref_point):
    """Physical point and Jacobian of the reference map of one cell."""
    if not (0 <= cell < m.num_cells):
        raise IndexError(f"cell {cell} out of range")
    x, jac = map_points(m, np.asarray(ref_point, dtype=float)[None, :], cells=[cell])
    j = np.array(jac[0, 0])
    if np.linalg.det(j) <= 0:
        raise MeshError(f"degenerate Jacobian in cell {cell}")
    return x[0, 0].copy(), j


def reference_centroid(kind: str) -> np.ndarray:
    return np.array([1 / 3, 1 / 3]) if kind == TRIANGLE else np.zeros(2)


def reference_area(kind: str) -> float:
    return 0.5 if kind == TRIANGLE else 4.0
