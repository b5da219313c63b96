"""Command line entry point.

Exit codes: 0 when every verdict is PASS or SKIP, 2 when any is FAIL,
1 on an execution error (bad arguments, unreadable config, I/O failure).
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import mesh as meshlib
from . import quadrature
from .elements import FAMILIES, dof_matrix, reference_element
from .space import build, check_vanishing
from .study import StudyConfig, emit, run_study, summary, to_csv, to_json

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
KINDS = {"tri": meshlib.TRIANGLE, "quad": meshlib.QUADRILATERAL,
         "triangle": meshlib.TRIANGLE, "quadrilateral": meshlib.QUADRILATERAL}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; here 2 means a FAIL verdict."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output path (mesh file or table)")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="table format (default csv)")
    p.add_argument("--threads", type=int, default=1, help="levels computed concurrently")
    p.add_argument("--seed", type=int, default=None, help="seed for perturbation and random probes")


def _level_args(p: argparse.ArgumentParser, family_default="P1"):
    p.add_argument("--family", default=family_default, choices=FAMILIES)
    p.add_argument("--n", type=int, nargs="+", default=[16], help="cells per side (one or more levels)")
    p.add_argument("--solution", default=None)
    p.add_argument("--mesh", dest="mesh_mode", default="structured", choices=("structured", "perturbed", "graded"))
    p.add_argument("--amplitude", type=float, default=0.2)
    p.add_argument("--mu", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fesharp", description="Finite element sharpness laboratory")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh", help="generate or inspect a mesh")
    _common(p)
    p.add_argument("--kind", default="tri", choices=sorted(KINDS))
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--mode", default="structured", choices=("structured", "perturbed", "graded"))
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--amplitude", type=float, default=0.2)
    p.add_argument("--refine", type=int, default=0, help="uniform refinements after generation")
    p.add_argument("--input", help="read this mesh file instead of generating one")

    for name, help_ in (("solve", "source problem on one or more levels"),
                        ("eigen", "smallest eigenpair on one or more levels"),
                        ("bestapprox", "best approximation distance on one or more levels")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        _level_args(p)
        p.add_argument("--j", type=int, nargs="+", default=None, help="norm orders (default 0..r-1)")

    p = sub.add_parser("study", help="run a refinement ladder from a key = value config file")
    _common(p)
    p.add_argument("config")

    p = sub.add_parser("selftest", help="unisolvence, Gamma-vanishing and quadrature sweeps")
    _common(p)
    return ap


def _mesh_cmd(args) -> int:
    if args.input:
        m = meshlib.Mesh.read(args.input)
    else:
        kind = KINDS[args.kind]
        if args.mode == "graded":
            if kind != meshlib.TRIANGLE:
                raise ValueError("graded meshes are triangular")
            m = meshlib.grade_toward_corner(args.n, args.mu)
        else:
            m = meshlib.build_structured(args.n, kind)
            if args.mode == "perturbed":
                m = meshlib.perturb(m, args.amplitude, 0 if args.seed is None else args.seed)
    for _ in range(args.refine):
        m = meshlib.refine_uniform(m)
    m.validate()
    q = meshlib.quality(m)
    print(f"{m.kind} mesh: {m.num_vertices} vertices, {m.num_cells} cells, {m.num_edges} faces "
          f"({int(m.boundary_edges.sum())} on the boundary)")
    print(f"h = {q.h:.17g}  h_min = {q.h_min:.17g}  sigma = {q.sigma:.17g}  beta = {q.beta:.17g}")
    if args.out:
        m.write(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _level_config(args, problem: str) -> StudyConfig:
    el = reference_element(args.family)
    js = list(range(el.order)) if args.j is None else args.j
    morley = args.family == "MORLEY"
    if problem == "source":
        problem = "source_biharmonic" if morley else "source_poisson"
    elif problem == "eigen":
        problem = "eigen_biharmonic" if morley else "eigen_laplace"
    return StudyConfig(problem=problem, family=args.family, levels=tuple(args.n), solution=args.solution,
                       norms=tuple((j, 2, False) for j in js), sharpness=(), mesh=args.mesh_mode,
                       amplitude=args.amplitude, mu=args.mu, seed=0 if args.seed is None else args.seed)


def _report(table, args, fmt_default="csv") -> int:
    fmt = args.format or fmt_default
    if args.out:
        emit(table, fmt, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(to_csv(table) if fmt == "csv" else to_json(table))
    print(summary(table), file=sys.stderr)
    return EXIT_FAIL if table.verdict == "FAIL" else EXIT_OK


def _study_cmd(args) -> int:
    cfg = StudyConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format:
        cfg.format = args.format
    if args.out:
        cfg.out = args.out
    table = run_study(cfg, threads=args.threads)
    print(summary(table))
    if cfg.out:
        emit(table, cfg.format, cfg.out)
        print(f"wrote {cfg.out}")
    else:
        sys.stdout.write(to_csv(table) if cfg.format == "csv" else to_json(table))
    return EXIT_FAIL if table.verdict == "FAIL" else EXIT_OK


def selftest(seed: int = 0, stream=None) -> bool:
    """Quadrature sweeps, unisolvence and Gamma-vanishing; prints one line per check."""
    stream = sys.stdout if stream is None else stream
    ok = True

    def line(name, passed, detail):
        nonlocal ok
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}", file=stream)

    for kind, top in ((meshlib.TRIANGLE, quadrature.MAX_SIMPLEX_DEGREE), (meshlib.QUADRILATERAL, quadrature.MAX_BOX_DEGREE)):
        worst = 0.0
        for d in range(1, top + 1):
            rule = quadrature.rule_for(kind, d)
            for a in range(rule.exact_degree + 1):
                for b in range(rule.exact_degree + 1 - a):
                    approx = float(np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b))
                    worst = max(worst, abs(approx - quadrature.reference_monomial_integral(kind, a, b)))
        line(f"quadrature {kind}", worst <= 1e-12, f"max monomial error {worst:.2e}")
    for fam in FAMILIES:
        el = reference_element(fam)
        err = float(np.max(np.abs(dof_matrix(el) - np.eye(el.num_basis))))
        line(f"unisolvence {fam}", err <= 1e-10, f"|D - I|_max = {err:.2e}")
        # parametric Q1/Q2 keep Gamma only on parallelograms, so they are checked
        # on the affine structured mesh; the rest on a perturbed one
        m = meshlib.build_structured(3, el.cell_kind)
        if not el.parametric:
            m = meshlib.perturb(m, 0.2, seed)
        s = build(m, fam)
        van = max(check_vanishing(s, g, trials=3, seed=seed) for g in el.gamma)
        mesh_note = "structured" if el.parametric else "perturbed"
        line(f"gamma {fam}", van <= 1e-10,
             f"max |D^gamma v_h| = {van:.2e} over {len(el.gamma)} indices ({mesh_note} mesh)")
    return ok


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "mesh":
            return _mesh_cmd(args)
        if args.command == "study":
            return _study_cmd(args)
        if args.command == "selftest":
            return EXIT_OK if selftest(0 if args.seed is None else args.seed) else EXIT_FAIL
        problem = {"solve": "source", "eigen": "eigen", "bestapprox": "bestapprox"}[args.command]
        table = run_study(_level_config(args, problem), threads=args.threads)
        return _report(table, args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
