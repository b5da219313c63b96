"""Refinement-ladder studies: configs, the level runner, rate fits, sharpness verdicts, emission.

A study fixes a problem, an element family and a manufactured solution,
then walks a ladder of mesh sizes n.  Each level produces broken-norm errors,
optional weighted per-cell sums and the ratios E / h^(r-j).  A sharpness pair
(j, p) gets verdict PASS when all ratios are positive, their band max/min is
at most ``band`` and the fitted rate is within ``rate_tol`` of r - j.  The
verdict is SKIP when no gamma in the family's vanishing set has
||D^gamma u||_{0,2,G} > 0, since the lower bound then does not apply.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import mesh as meshlib
from .assembly import ConvergenceError, assemble_bilinear, assemble_load, assemble_mass, smallest_eigpair, solve_spd
from .bestapprox import best_approx
from .elements import FAMILIES, reference_element
from .manufactured import CATALOG, laplace_eigenpair, manufactured
from .norms import INF, NormSpec, broken_error, check_region, weighted_error
from .space import FEFunction, build, check_vanishing, interpolate

PROBLEMS = ("source_poisson", "source_biharmonic", "eigen_laplace", "eigen_biharmonic", "bestapprox", "interpolate")
MESH_MODES = ("structured", "perturbed", "graded")
ESSENTIAL = {"source_poisson": 1, "eigen_laplace": 1, "source_biharmonic": 2, "eigen_biharmonic": 2,
             "bestapprox": 0, "interpolate": 0}
DEFAULT_SOLUTION = {"source_biharmonic": "sinsin2", "eigen_biharmonic": "plate1"}
GATE_TOL = 1e-10
HYPOTHESIS_TOL = 1e-10
# CG tolerance per operator order; the biharmonic systems reach kappa ~ 4e5 at
# n = 64, where rounding x to double alone leaves a relative residual ~6e-12
SOLVER_TOL = {1: 1e-12, 2: 1e-10}


class StudyError(ValueError):
    pass


def _fmt_p(p) -> str:
    return "inf" if p == INF else str(int(p))


def _parse_p(text: str):
    text = text.strip().lower()
    if text in ("inf", "infinity"):
        return INF
    try:
        p = int(text)
    except ValueError:
        raise StudyError(f"bad norm exponent {text!r}") from None
    if p not in (1, 2):
        raise StudyError(f"norm exponent must be 1, 2 or inf, got {text!r}")
    return p


def _items(text: str):
    return [t.strip() for t in text.split(",") if t.strip()]


@dataclass
class StudyConfig:
    problem: str = "bestapprox"
    family: str = "P1"
    levels: tuple = (8, 16, 32, 64)
    solution: Optional[str] = None  # None picks the problem default
    norms: tuple = ()  # (j, p, seminorm); the full (j, p) norms of sharpness pairs are always added
    sharpness: tuple = ((0, 2), (1, 2))
    weighted: tuple = ()  # (j, p, q)
    region: Optional[tuple] = None
    mesh: str = "structured"
    amplitude: float = 0.2
    seed: int = 0
    mu: float = 0.5
    band: float = 4.0
    rate_tol: float = 0.2
    solver_tol: Optional[float] = None  # None picks SOLVER_TOL by operator order
    eigen_tol: float = 1e-12
    out: Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        self.levels = tuple(int(n) for n in self.levels)
        self.norms = tuple((int(j), p, bool(s)) for j, p, s in self.norms)
        self.sharpness = tuple((int(j), p) for j, p in self.sharpness)
        self.weighted = tuple((int(j), p, q) for j, p, q in self.weighted)
        if self.region is not None:
            self.region = tuple(float(v) for v in self.region)
        if self.solution is None:
            self.solution = DEFAULT_SOLUTION.get(self.problem, "sinsin")

    @property
    def element(self):
        return reference_element(self.family)

    @property
    def cell_kind(self) -> str:
        return self.element.cell_kind

    @property
    def operator_order(self) -> int:
        return 2 if "biharmonic" in self.problem else 1

    @property
    def tol(self) -> float:
        return SOLVER_TOL[self.operator_order] if self.solver_tol is None else self.solver_tol

    def norm_specs(self) -> list[NormSpec]:
        specs = [NormSpec(j, p, self.region, s) for j, p, s in self.norms]
        for j, p in self.sharpness:
            spec = NormSpec(j, p, self.region, False)
            if spec not in specs:
                specs.append(spec)
        return specs

    def validate(self) -> "StudyConfig":
        if self.problem not in PROBLEMS:
            raise StudyError(f"unknown problem {self.problem!r}; expected one of {', '.join(PROBLEMS)}")
        if self.family not in FAMILIES:
            raise StudyError(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.mesh not in MESH_MODES:
            raise StudyError(f"unknown mesh mode {self.mesh!r}; expected one of {', '.join(MESH_MODES)}")
        if self.solution not in CATALOG:
            raise StudyError(f"unknown solution {self.solution!r}")
        if not self.levels or any(n < 1 for n in self.levels):
            raise StudyError(f"levels must be positive integers, got {self.levels!r}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise StudyError(f"levels must be strictly increasing, got {self.levels!r}")
        biharmonic = self.operator_order == 2
        if self.problem not in ("bestapprox", "interpolate"):
            if biharmonic and self.family != "MORLEY":
                raise StudyError(f"{self.problem} needs the MORLEY family, got {self.family}")
            if not biharmonic and self.family == "MORLEY":
                raise StudyError(f"MORLEY discretizes fourth-order problems only, not {self.problem}")
        sol = manufactured(self.solution)
        if self.problem.startswith("source") and sol.boundary_order < self.operator_order:
            raise StudyError(f"solution {self.solution!r} does not satisfy the homogeneous boundary "
                             f"conditions of {self.problem}")
        if self.problem == "eigen_laplace" and self.solution != "sinsin":
            raise StudyError("eigen_laplace studies use the sinsin eigenpair")
        if self.problem == "eigen_biharmonic" and self.solution != "plate1":
            raise StudyError("eigen_biharmonic studies use the plate1 eigenpair")
        if self.mesh == "graded" and self.cell_kind != meshlib.TRIANGLE:
            raise StudyError("graded meshes are triangular; pick a triangle family")
        if self.mesh == "graded" and min(self.levels) < 2:
            raise StudyError("graded meshes need n >= 2")
        if self.region is not None:
            check_region(self.region)
        r = self.element.order
        for j, p in self.sharpness:
            if not 0 <= j < r:
                raise StudyError(f"sharpness pair j={j} needs 0 <= j < r = {r}")
        for j, p, q in self.weighted:
            if p == INF:
                raise StudyError("weighted sums need p < inf")
        self.norm_specs()
        if self.band < 1:
            raise StudyError(f"band threshold must be >= 1, got {self.band}")
        if self.format not in ("csv", "json"):
            raise StudyError(f"format must be csv or json, got {self.format!r}")
        return self

    # flat key = value text
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name == "levels":
                v = ", ".join(str(n) for n in v)
            elif f.name == "norms":
                v = ", ".join(f"{j}:{_fmt_p(p)}" + (":semi" if s else "") for j, p, s in v)
            elif f.name == "sharpness":
                v = ", ".join(f"{j}:{_fmt_p(p)}" for j, p in v)
            elif f.name == "weighted":
                v = ", ".join(f"{j}:{_fmt_p(p)}:{_fmt_p(q)}" for j, p, q in v)
            elif f.name == "region":
                v = ", ".join(repr(t) for t in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StudyConfig":
        kw = {}
        known = {f.name for f in fields(cls)}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise StudyError(f"line {num}: expected key = value, got {raw!r}")
            key, value = (t.strip() for t in line.split("=", 1))
            if key not in known:
                raise StudyError(f"line {num}: unknown key {key!r}")
            kw[key] = _parse_value(key, value, num)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise StudyError(f"cannot read config {path}: {exc}") from exc


def _parse_value(key, value, num):
    try:
        if key == "levels":
            return tuple(int(t) for t in _items(value))
        if key == "norms":
            out = []
            for item in _items(value):
                parts = item.split(":")
                semi = len(parts) == 3 and parts[2].strip() == "semi"
                if len(parts) not in (2, 3) or (len(parts) == 3 and not semi):
                    raise StudyError(f"bad norm item {item!r}; use j:p or j:p:semi")
                out.append((int(parts[0]), _parse_p(parts[1]), semi))
            return tuple(out)
        if key == "sharpness":
            out = []
            for item in _items(value):
                j, p = item.split(":")
                out.append((int(j), _parse_p(p)))
            return tuple(out)
        if key == "weighted":
            out = []
            for item in _items(value):
                j, p, q = item.split(":")
                out.append((int(j), _parse_p(p), _parse_p(q)))
            return tuple(out)
        if key == "region":
            if value.lower() in ("", "whole", "none"):
                return None
            vals = tuple(float(t) for t in _items(value))
            if len(vals) != 4:
                raise StudyError("region needs x0, x1, y0, y1")
            return vals
        if key in ("amplitude", "mu", "band", "rate_tol", "eigen_tol"):
            return float(value)
        if key == "solver_tol":
            return None if value.lower() in ("", "none", "auto") else float(value)
        if key == "seed":
            return int(value)
        return value or None
    except (ValueError, StudyError) as exc:
        raise StudyError(f"line {num}: bad value for {key}: {exc}") from None


def make_mesh(cfg: StudyConfig, n: int) -> meshlib.Mesh:
    if cfg.mesh == "graded":
        return meshlib.grade_toward_corner(n, cfg.mu)
    m = meshlib.build_structured(n, cfg.cell_kind)
    if cfg.mesh == "perturbed":
        m = meshlib.perturb(m, cfg.amplitude, cfg.seed)
    return m


def reference_solution(cfg: StudyConfig):
    if cfg.problem == "eigen_laplace":
        return laplace_eigenpair()
    return manufactured(cfg.solution)


@dataclass
class LevelRow:
    level: int
    n: int
    h: float
    dofs: int
    values: dict = field(default_factory=dict)  # column -> value
    ratios: dict = field(default_factory=dict)
    sigma: float = math.nan
    beta: float = math.nan
    failure: Optional[str] = None


@dataclass
class RateFit:
    slope: float
    residual: float  # rms residual of the log-log least-squares fit
    pairwise: list
    excluded: list  # levels left out because the value was not positive and finite
    flagged: bool


@dataclass
class SharpnessResult:
    j: int
    p: float
    column: str
    expected_rate: int
    ratios: list
    band: float
    rate: float
    verdict: str
    reason: str


@dataclass
class ConvergenceTable:
    config: StudyConfig
    order: int
    columns: list
    ratio_columns: list
    rows: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    sharpness: list = field(default_factory=list)
    gate: dict = field(default_factory=dict)  # gamma label -> max |D^gamma v_h|
    hypothesis: dict = field(default_factory=dict)  # gamma label -> ||D^gamma u||_{0,2,G}

    @property
    def gate_ok(self) -> bool:
        return all(v <= GATE_TOL for v in self.gate.values())

    @property
    def hypothesis_ok(self) -> bool:
        return any(v > HYPOTHESIS_TOL for v in self.hypothesis.values())

    @property
    def verdict(self) -> str:
        verdicts = [s.verdict for s in self.sharpness]
        if any(r.failure for r in self.rows) or "FAIL" in verdicts or not self.gate_ok:
            return "FAIL"
        if verdicts and all(v == "SKIP" for v in verdicts):
            return "SKIP"
        return "PASS"

    def column(self, name: str) -> np.ndarray:
        return np.array([r.values.get(name, math.nan) for r in self.rows])

    def hs(self) -> np.ndarray:
        return np.array([r.h for r in self.rows])


def _gamma_label(g) -> str:
    return f"{g[0]}{g[1]}"


def _column_names(cfg: StudyConfig):
    cols = [s.label for s in cfg.norm_specs()]
    cols += [f"weighted_j{j}_p{_fmt_p(p)}_q{_fmt_p(q)}" for j, p, q in cfg.weighted]
    if cfg.problem.startswith("eigen"):
        cols += ["lambda_h", "lambda_err"]
    ratios = [f"ratio_j{j}_p{_fmt_p(p)}" for j, p in cfg.sharpness]
    return cols, ratios


def _run_level(cfg: StudyConfig, level: int, n: int) -> LevelRow:
    m = make_mesh(cfg, n)
    q = meshlib.quality(m)
    s = build(m, cfg.family, ESSENTIAL[cfg.problem])
    row = LevelRow(level, n, q.h, s.num_dofs, sigma=q.sigma, beta=q.beta)
    u = reference_solution(cfg)
    r = s.element.order
    specs = cfg.norm_specs()
    try:
        signs = (1.0,)
        v = None
        best = {}
        if cfg.problem.startswith("source"):
            a = assemble_bilinear(s, cfg.operator_order)
            f = u.f_laplace if cfg.operator_order == 1 else u.f_biharmonic
            v = FEFunction(s, solve_spd(a, assemble_load(s, f), rel_tol=cfg.tol))
        elif cfg.problem.startswith("eigen"):
            a = assemble_bilinear(s, cfg.operator_order)
            lam, v = smallest_eigpair(a, assemble_mass(s), rel_tol=cfg.eigen_tol, space=s, inner_tol=cfg.tol)
            row.values["lambda_h"] = lam
            row.values["lambda_err"] = abs(lam - u.eigenvalue)
            signs = (1.0, -1.0)
        elif cfg.problem == "interpolate":
            v = interpolate(s, u)

        def best_for(j):
            if j not in best:
                best[j] = best_approx(s, u, j, cfg.region)
            return best[j]

        for spec in specs:
            if cfg.problem == "bestapprox":
                b = best_for(spec.j)
                if spec.p == 2 and not spec.seminorm:
                    val = b.distance
                else:
                    val = broken_error(s, u, b.minimizer, spec)
                    if spec.p != 2:
                        val = min(val, broken_error(s, u, interpolate(s, u), spec))
            else:
                val = min(broken_error(s, u, FEFunction(s, sg * v.coeffs), spec) for sg in signs)
            row.values[spec.label] = val
        if len(signs) == 2:
            l2 = NormSpec(0, 2, cfg.region)
            if broken_error(s, u, FEFunction(s, -v.coeffs), l2) < broken_error(s, u, v, l2):
                v = FEFunction(s, -v.coeffs)
        for j, p, qq in cfg.weighted:
            w = best_for(j).minimizer if cfg.problem == "bestapprox" else v
            row.values[f"weighted_j{j}_p{_fmt_p(p)}_q{_fmt_p(qq)}"] = weighted_error(s, u, w, j, r, p, qq, cfg.region)
        for j, p in cfg.sharpness:
            row.ratios[f"ratio_j{j}_p{_fmt_p(p)}"] = row.values[NormSpec(j, p, cfg.region).label] / q.h ** (r - j)
    except ConvergenceError as exc:
        row.failure = str(exc)
    return row


def _gate(cfg: StudyConfig, seed: int):
    """check_vanishing for each gamma in the family's set, and ||D^gamma u||_{0,2,G}."""
    s = build(make_mesh(cfg, cfg.levels[0]), cfg.family, ESSENTIAL[cfg.problem])
    u = reference_solution(cfg)
    gate, hyp = {}, {}
    for g in s.element.gamma:
        gate[_gamma_label(g)] = check_vanishing(s, g, trials=3, seed=seed)

        def dg(x, y, alpha=(0, 0), g=g):
            return u(x, y, (g[0] + alpha[0], g[1] + alpha[1]))
        hyp[_gamma_label(g)] = broken_error(s, dg, None, NormSpec(0, 2, cfg.region))
    return gate, hyp


def fit_rates(table: ConvergenceTable) -> ConvergenceTable:
    """Least-squares slope of log E against log h for every error column, plus pairwise rates."""
    hs = table.hs()
    table.rates = {}
    for col in table.columns:
        if col == "lambda_h":
            continue
        table.rates[col] = fit_rate(hs, table.column(col), [r.level for r in table.rows])
    return table


def fit_rate(hs, es, levels=None) -> RateFit:
    hs = np.asarray(hs, dtype=float)
    es = np.asarray(es, dtype=float)
    levels = list(range(len(hs))) if levels is None else list(levels)
    ok = np.isfinite(es) & (es > 0) & np.isfinite(hs) & (hs > 0)
    excluded = [lv for lv, good in zip(levels, ok) if not good]
    lh, le = np.log(hs[ok]), np.log(es[ok])
    if len(lh) >= 2:
        slope, icpt = np.polyfit(lh, le, 1)
        residual = float(np.sqrt(np.mean((le - (slope * lh + icpt)) ** 2)))
        pairwise = [float((le[i] - le[i + 1]) / (lh[i] - lh[i + 1])) for i in range(len(lh) - 1)]
    else:
        slope, residual, pairwise = math.nan, math.nan, []
    return RateFit(float(slope), residual, pairwise, excluded, bool(excluded) or len(lh) < 3)


def _verdicts(table: ConvergenceTable):
    cfg = table.config
    r = table.order
    out = []
    for (j, p), rcol in zip(cfg.sharpness, table.ratio_columns):
        col = NormSpec(j, p, cfg.region).label
        ratios = [row.ratios.get(rcol, math.nan) for row in table.rows]
        fit = table.rates.get(col)
        rate = fit.slope if fit else math.nan
        arr = np.array(ratios, dtype=float)
        positive = bool(len(arr)) and bool(np.all(np.isfinite(arr)) and np.all(arr > 0))
        band = float(arr.max() / arr.min()) if positive else math.nan
        if not table.hypothesis_ok:
            verdict, reason = "SKIP", "||D^gamma u|| = 0 for every gamma in the vanishing set"
        elif not table.gate_ok:
            verdict, reason = "FAIL", "vanishing-derivative gate failed"
        elif any(row.failure for row in table.rows):
            verdict, reason = "FAIL", "a level failed to solve"
        elif not positive:
            verdict, reason = "FAIL", "non-positive or missing ratio"
        elif len(arr) < 3:
            verdict, reason = "FAIL", "fewer than 3 levels"
        elif band > cfg.band:
            verdict, reason = "FAIL", f"band {band:.3f} > {cfg.band}"
        elif not abs(rate - (r - j)) <= cfg.rate_tol:
            verdict, reason = "FAIL", f"rate {rate:.3f} not within {cfg.rate_tol} of {r - j}"
        else:
            verdict, reason = "PASS", ""
        out.append(SharpnessResult(j, p, col, r - j, ratios, band, rate, verdict, reason))
    return out


def run_study(cfg: StudyConfig, threads: int = 1) -> ConvergenceTable:
    """Run every level of ``cfg`` and return the fitted, judged table.  Deterministic for fixed cfg."""
    cfg.validate()
    cols, rcols = _column_names(cfg)
    table = ConvergenceTable(cfg, cfg.element.order, cols, rcols)
    table.gate, table.hypothesis = _gate(cfg, cfg.seed)
    jobs = list(enumerate(cfg.levels))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda job: _run_level(cfg, *job), jobs))
    else:
        rows = [_run_level(cfg, *job) for job in jobs]
    for row in rows:
        if row.failure:
            for c in cols:
                row.values.setdefault(c, math.nan)
            for c in rcols:
                row.ratios.setdefault(c, math.nan)
    table.rows = sorted(rows, key=lambda row: (-row.h, row.level))
    fit_rates(table)
    table.sharpness = _verdicts(table)
    return table


# emission

def _real(x) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.17g}"


def to_csv(table: ConvergenceTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "n", "h", "dofs"] + table.columns + table.ratio_columns)
    for row in table.rows:
        w.writerow([row.level, row.n, _real(row.h), row.dofs]
                   + [_real(row.values.get(c)) for c in table.columns]
                   + [_real(row.ratios.get(c)) for c in table.ratio_columns])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return None if math.isnan(x) else x
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    return x


def table_dict(table: ConvergenceTable) -> dict:
    cfg = asdict(table.config)
    return _jsonable({
        "config": cfg,
        "order": table.order,
        "columns": table.columns,
        "ratio_columns": table.ratio_columns,
        "gate": table.gate,
        "hypothesis": table.hypothesis,
        "rows": [asdict(r) for r in table.rows],
        "rates": {k: asdict(v) for k, v in table.rates.items()},
        "sharpness": [asdict(s) for s in table.sharpness],
        "verdict": table.verdict,
    })


def to_json(table: ConvergenceTable) -> str:
    # floats go through repr, the shortest string that round-trips bit-exactly
    return json.dumps(table_dict(table), indent=2) + "\n"


def emit(table: ConvergenceTable, fmt: str, path) -> None:
    if fmt not in ("csv", "json"):
        raise StudyError(f"format must be csv or json, got {fmt!r}")
    text = to_csv(table) if fmt == "csv" else to_json(table)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise StudyError(f"cannot write {fmt} table to {path}: {exc}") from exc


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise StudyError(f"cannot read {path}: {exc}") from exc


def summary(table: ConvergenceTable) -> str:
    cfg = table.config
    lines = [f"{cfg.problem} {cfg.family} {cfg.solution} mesh={cfg.mesh} levels={list(cfg.levels)}"]
    for col, fit in table.rates.items():
        lines.append(f"  rate {col}: {fit.slope:.4f} (pairwise {', '.join(f'{x:.3f}' for x in fit.pairwise)})")
    for sres in table.sharpness:
        lines.append(f"  sharpness j={sres.j} p={_fmt_p(sres.p)}: band {sres.band:.3f}, rate {sres.rate:.3f}, "
                     f"expected {sres.expected_rate} -> {sres.verdict}" + (f" ({sres.reason})" if sres.reason else ""))
    for row in table.rows:
        if row.failure:
            lines.append(f"  level n={row.n} failed: {row.failure}")
    lines.append(f"  verdict: {table.verdict}")
    return "\n".join(lines)
