"""Assembly of broken bilinear forms and SPD solvers.

Matrices are ``scipy.sparse.csr_matrix``.  Constrained DOFs are eliminated by
zeroing their rows and columns and putting 1 on the diagonal, so every system
stays symmetric positive definite and constrained unknowns come out exactly 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh_tridiagonal
from scipy.sparse.linalg import splu

from . import quadrature
from .elements import factorial_weight, multi_indices
from .space import FEFunction, FESpace

NORM_DEGREE = {"triangle": 10, "quadrilateral": 11}
CELL_BLOCK = 4096


class AssemblyError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = info  # SolveInfo of the failed attempt, when available


def assembly_rule(s: FESpace) -> quadrature.QuadRule:
    deg = s.element.degree
    if s.mesh.kind == "triangle":
        return quadrature.rule_simplex(max(2 * deg, 1))
    # bilinear maps make the integrands rational; over-integrate
    return quadrature.rule_box(min(2 * deg + 3, quadrature.MAX_BOX_DEGREE))


def norm_rule(s: FESpace) -> quadrature.QuadRule:
    return quadrature.rule_for(s.mesh.kind, NORM_DEGREE[s.mesh.kind])


def cell_blocks(ncells: int, block: int = CELL_BLOCK):
    for start in range(0, ncells, block):
        yield np.arange(start, min(start + block, ncells))


def _scatter(s: FESpace, local: np.ndarray, cells: np.ndarray):
    cd = s.cell_dofs[cells]
    nb = cd.shape[1]
    rows = np.repeat(cd, nb, axis=1).ravel()
    cols = np.tile(cd, (1, nb)).ravel()
    return rows, cols, local.reshape(len(cells), -1).ravel()


def _assemble(s: FESpace, terms, rule, constrain: bool, cells=None):
    """Sum over cells of sum_(alpha, weight) weight * int D^alpha phi_a D^alpha phi_b."""
    alphas = [a for a, _ in terms]
    cells = np.arange(s.mesh.num_cells) if cells is None else np.asarray(cells)
    rows, cols, vals = [], [], []
    for blk in cell_blocks(len(cells)):
        blk = cells[blk]
        tab = s.tabulate(rule.points, alphas, blk)
        wq = tab.det * rule.weights[None, :]
        local = 0.0
        for a, w in terms:
            d = tab.derivs[a]
            local = local + w * np.einsum("cq,cqa,cqb->cab", wq, d, d)
        local = 0.5 * (local + np.swapaxes(local, 1, 2))
        r, c, v = _scatter(s, local, blk)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    n = s.num_dofs
    if not rows:
        return sp.csr_matrix((n, n))
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    if constrain and np.any(s.constrained):
        keep = sp.diags(s.free.astype(float))
        mat = (keep @ mat @ keep + sp.diags(s.constrained.astype(float))).tocsr()
    mat = ((mat + mat.T) * 0.5).tocsr()
    mat.sort_indices()
    return mat


def assemble_bilinear(s: FESpace, m: int = 1, constrain: bool = True) -> sp.csr_matrix:
    """Broken form sum_K int_K sum_{|alpha|=m} (m!/alpha!) D^alpha u D^alpha v.

    The multinomial weights make the continuous form equal to
    int D^m u : D^m v, whose Euler-Lagrange operator on H^m_0 is (-1)^m Delta^m.
    """
    if m not in (1, 2):
        raise AssemblyError(f"bilinear form order must be 1 or 2, got {m!r}")
    if m == 2 and s.element.family != "MORLEY":
        raise AssemblyError(f"{s.element.family} has no order-2 form in this catalog; only MORLEY")
    terms = [(a, factorial_weight(a)) for a in multi_indices(m)]
    return _assemble(s, terms, assembly_rule(s), constrain)


def assemble_mass(s: FESpace, constrain: bool = True) -> sp.csr_matrix:
    return _assemble(s, [((0, 0), 1.0)], assembly_rule(s), constrain)


def assemble_gram(s: FESpace, j: int, cells=None) -> sp.csr_matrix:
    """Unconstrained broken W^{j,2} Gram matrix over ``cells``, integrated with the norm rule."""
    terms = [(a, 1.0) for ell in range(j + 1) for a in multi_indices(ell)]
    return _assemble(s, terms, norm_rule(s), constrain=False, cells=cells)


def assemble_load(s: FESpace, f, constrain: bool = True) -> np.ndarray:
    """Entries (f, phi_i) with ``f(x, y)``; constrained entries are zeroed."""
    rule = norm_rule(s)
    b = np.zeros(s.num_dofs)
    for cells in cell_blocks(s.mesh.num_cells):
        tab = s.tabulate(rule.points, [(0, 0)], cells)
        fx = np.asarray(f(tab.x[..., 0], tab.x[..., 1]), dtype=float)
        fx = np.broadcast_to(fx, tab.det.shape)
        local = np.einsum("cq,cqb->cb", tab.det * rule.weights[None, :] * fx, tab.derivs[(0, 0)])
        np.add.at(b, s.cell_dofs[cells].ravel(), local.ravel())
    if constrain:
        b[s.constrained] = 0.0
    return b


def symmetry_defect(a: sp.spmatrix) -> float:
    d = (a - a.T).tocoo()
    return float(np.max(np.abs(d.data))) if d.nnz else 0.0


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    condition: float  # Lanczos estimate for the Jacobi-scaled matrix


def solve_spd(a, b, rel_tol: float = 1e-12, return_info: bool = False, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients from x0 = 0.

    Stops when the true residual of the returned vector satisfies
    ||b - A x|| <= rel_tol ||b||.  This is mixed precision iterative
    refinement: the iterate and each CG pass are double precision, while the
    true residual is evaluated in extended precision (``np.longdouble``), so
    the attainable floor is set by rounding x to double rather than by the
    noise of a double residual evaluation.  Each pass solves for a correction
    until its recursive residual meets the target.  A pass that fails to halve
    the true residual means the request is below that floor and raises
    ConvergenceError, as does exhausting ``maxiter`` (default 10 * dim) iterations.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        info = SolveInfo(0, 0.0, 1.0)
        x = np.zeros(n)
        return (x, info) if return_info else x
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise AssemblyError("matrix has a non-positive diagonal entry; not SPD")
    dinv = 1.0 / diag
    a_ext = a.astype(np.longdouble)
    b_ext = b.astype(np.longdouble)
    x = np.zeros(n)
    maxiter = 10 * n if maxiter is None else maxiter
    target = rel_tol * bnorm
    it = 0
    alphas, betas = [], []
    r = b.copy()
    first_pass = True  # Lanczos coefficients are only valid for the first pass
    last = np.inf
    while True:
        d = np.zeros(n)
        z = dinv * r
        p = z.copy()
        rz = float(r @ z)
        while it < maxiter:
            ap = a @ p
            pap = float(p @ ap)
            if pap <= 0:
                raise ConvergenceError(f"non-positive curvature p.Ap = {pap!r}; matrix not SPD")
            alpha = rz / pap
            d += alpha * p
            r -= alpha * ap
            it += 1
            if first_pass:
                alphas.append(alpha)
            if np.linalg.norm(r) <= target:
                break
            z = dinv * r
            rz_new = float(r @ z)
            beta = rz_new / rz
            if first_pass:
                betas.append(beta)
            rz = rz_new
            p = z + beta * p
        first_pass = False
        x += d
        r_ext = b_ext - a_ext @ x.astype(np.longdouble)
        r = r_ext.astype(float)
        res = float(np.sqrt(np.sum(r_ext * r_ext)))
        if res <= target:
            break
        if it >= maxiter or res > 0.5 * last:
            info = SolveInfo(it, res / bnorm, _lanczos_condition(alphas, betas))
            if it >= maxiter:
                raise ConvergenceError(f"CG did not converge in {maxiter} iterations "
                                       f"(relative residual {res / bnorm:.3e}); check the assembly", info)
            raise ConvergenceError(f"CG stagnated at relative residual {res / bnorm:.3e} > {rel_tol:.1e}; "
                                   "the tolerance is below the rounding floor of this system", info)
        last = res
    if return_info:
        return x, SolveInfo(it, res / bnorm, _lanczos_condition(alphas, betas))
    return x


def solve_direct(a, b, rel_tol: float = 1e-12, max_steps: int = 8):
    """Sparse LU solve with extended precision residual refinement.

    Used for systems whose condition puts ``rel_tol`` below the CG floor.  The
    refinement stops at rel_tol or when a step no longer halves the residual;
    the achieved relative residual is reported in the returned SolveInfo
    (condition is not estimated here and is NaN).
    """
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(len(b)), SolveInfo(0, 0.0, float("nan"))
    lu = splu(sp.csc_matrix(a))
    a_ext = a.astype(np.longdouble)
    b_ext = b.astype(np.longdouble)
    x = lu.solve(b)
    best, best_res = x, np.inf
    for step in range(1, max_steps + 1):
        r_ext = b_ext - a_ext @ x.astype(np.longdouble)
        res = float(np.sqrt(np.sum(r_ext * r_ext))) / bnorm
        if res <= rel_tol or res > 0.5 * best_res:
            best, best_res = (x, res) if res < best_res else (best, best_res)
            break
        best, best_res = x, res
        x = x + lu.solve(r_ext.astype(float))
    return best, SolveInfo(step, best_res, float("nan"))


def _lanczos_condition(alphas, betas) -> float:
    k = len(alphas)
    if k == 0:
        return 1.0
    al = np.asarray(alphas)
    be = np.asarray(betas[:k - 1])
    d = 1.0 / al
    d[1:] += be / al[:-1]
    e = np.sqrt(be) / al[:-1]
    if k == 1:
        return 1.0
    lo = eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0), lapack_driver="stebz")[0]
    hi = eigvalsh_tridiagonal(d, e, select="i", select_range=(k - 1, k - 1), lapack_driver="stebz")[0]
    return float(hi / lo) if lo > 0 else float("inf")


def smallest_eigpair(a, m, rel_tol: float = 1e-12, space: FESpace | None = None, max_outer: int = 500,
                     inner_tol: float | None = None):
    """Smallest eigenpair of A x = lambda M x by inverse power iteration.

    Inner solves use solve_spd.  The returned vector has unit M-norm and its
    largest-magnitude entry is positive.  Constrained DOFs (unit rows in both
    A and M) stay exactly zero, so their spurious eigenvalue 1 never enters.
    """
    n = a.shape[0]
    x = np.ones(n)
    if space is not None:
        x[space.constrained] = 0.0
    x /= np.sqrt(x @ (m @ x))
    lam_old = None
    for _ in range(max_outer):
        y = solve_spd(a, m @ x, rel_tol=rel_tol if inner_tol is None else inner_tol)
        x = y / np.sqrt(y @ (m @ y))
        lam = float(x @ (a @ x))
        if lam_old is not None and abs(lam - lam_old) <= rel_tol * abs(lam):
            break
        lam_old = lam
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {max_outer} steps")
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    if space is not None:
        return lam, FEFunction(space, x)
    return lam, x
