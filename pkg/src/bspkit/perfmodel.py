"""Benchmark sweeps over (processors x data size) and polynomial model fitting.

A sweep runs one algorithm over a grid of (p, n) cells and records one value
per metric per cell: exact model cost (and optionally peak words) on the
simulate backend, median wall-clock seconds on the parallel backend.  A model
is a list of named basis terms over (p, n) fitted by linear least squares;
``surface`` reshapes a grid into a plot-ready matrix with a header row of n
values and a leading column of p values.
"""

from __future__ import annotations

import ast
import json
import statistics
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .algorithms import build_program
from .engine import make_environment, run, stable_digest
from .errors import UsageError
from .model import DEFAULT_G, DEFAULT_L, DEFAULT_R, MachineConfig

METRICS = ("cost", "time", "memory")

#: Low-degree polynomial terms plus the rational n/p term parallel laws need.
DEFAULT_BASIS = ("1", "n", "p", "n*p", "n/p", "n^2")


# --- basis terms ----------------------------------------------------------------

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Name,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Load,
)


@dataclass(frozen=True)
class BasisTerm:
    name: str
    fn: Callable[[float, float], float]


def compile_basis_term(expr: str) -> BasisTerm:
    """Compile an arithmetic expression over p and n (e.g. "n*(p-1)", "n^2")."""
    text = expr.strip().replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse basis term {expr!r}: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise UsageError(f"basis term {expr!r} uses unsupported syntax ({type(node).__name__})")
        if isinstance(node, ast.Name) and node.id not in ("p", "n"):
            raise UsageError(f"basis term {expr!r} references unknown variable {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise UsageError(f"basis term {expr!r} contains a non-numeric constant")
    code = compile(tree, f"<basis {expr!r}>", "eval")

    def fn(p: float, n: float) -> float:
        return float(eval(code, {"__builtins__": {}}, {"p": p, "n": n}))

    return BasisTerm(name=expr.strip(), fn=fn)


def parse_basis(spec: str | Sequence[str]) -> tuple[BasisTerm, ...]:
    names = [s for s in (spec.split(",") if isinstance(spec, str) else spec) if str(s).strip()]
    if not names:
        raise UsageError("empty basis")
    terms = tuple(compile_basis_term(str(s)) for s in names)
    seen = set()
    for t in terms:
        if t.name in seen:
            raise UsageError(f"duplicate basis term {t.name!r}")
        seen.add(t.name)
    return terms


# --- sweep grids ----------------------------------------------------------------


@dataclass(frozen=True)
class GridRow:
    p: int
    n: int
    metric: str
    value: float
    env_id: str


@dataclass(frozen=True)
class SweepGrid:
    rows: tuple[GridRow, ...]
    environments: tuple[tuple[str, dict], ...] = ()

    def select(self, metric: str) -> list[GridRow]:
        return [r for r in self.rows if r.metric == metric]

    def metrics(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.metric not in seen:
                seen.append(r.metric)
        return seen


def sweep(
    algorithm: str,
    p_list: Sequence[int],
    n_list: Sequence[int],
    backend: str = "simulate",
    repetitions: int = 1,
    *,
    metrics: Sequence[str] | None = None,
    g: float = DEFAULT_G,
    l: float = DEFAULT_L,
    r: float = DEFAULT_R,
    seed: int = 0,
    distribution: str = "uniform",
    env: dict | None = None,
) -> SweepGrid:
    """One row per (p, n) cell per metric.

    simulate cells are exact and ignore ``repetitions`` (noted in the
    environment record); parallel cells report the median wall time.
    """
    if not p_list or not n_list:
        raise UsageError("p_list and n_list must be non-empty")
    if repetitions < 1:
        raise UsageError("repetitions must be >= 1")
    if metrics is None:
        metrics = ("time",) if backend == "parallel" else ("cost",)
    for m in metrics:
        if m not in METRICS:
            raise UsageError(f"unknown metric {m!r}; expected one of {METRICS}")
        if m == "time" and backend != "parallel":
            raise UsageError("the time metric needs the parallel backend")
        if m == "memory" and backend != "simulate":
            raise UsageError("the memory metric is reported by the simulate backend only")

    overrides = dict(env or {})
    if backend == "simulate" and repetitions > 1:
        overrides.setdefault("repetitions", f"{repetitions} requested, ignored (simulate is exact)")
    environment = make_environment(backend, 1, overrides)
    env_dict = environment.to_dict()
    env_id = stable_digest({k: v for k, v in env_dict.items() if k != "timestamp"})[:12]

    rows: list[GridRow] = []
    for p in p_list:
        machine = MachineConfig(p=int(p), g=g, l=l, r=r)
        for n in n_list:
            program = build_program(algorithm, int(n), seed, distribution)
            if backend == "simulate":
                report = run(program, machine, backend="simulate")
                for m in metrics:
                    value = report.trace.total_cost if m == "cost" else float(report.peak_words)
                    rows.append(GridRow(p=int(p), n=int(n), metric=m, value=float(value), env_id=env_id))
            else:
                times = []
                report = None
                for _ in range(repetitions):
                    report = run(program, machine, backend="parallel", env=env)
                    times.append(report.wall_time)
                for m in metrics:
                    value = statistics.median(times) if m == "time" else report.trace.total_cost
                    rows.append(GridRow(p=int(p), n=int(n), metric=m, value=float(value), env_id=env_id))
    return SweepGrid(rows=tuple(rows), environments=((env_id, env_dict),))


# --- models -----------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualStats:
    max_abs: float
    rms: float
    r2: float


@dataclass(frozen=True)
class PerfModel:
    """Fitted linear model: value ~ sum(coefficients[i] * basis[i](p, n))."""

    basis: tuple[str, ...]
    coefficients: tuple[float, ...]
    residuals: ResidualStats
    metric: str = "cost"
    rank_deficient: bool = False
    deficient_terms: tuple[str, ...] = ()


def _design_matrix(rows: Sequence[GridRow], terms: Sequence[BasisTerm]) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([[t.fn(row.p, row.n) for t in terms] for row in rows], dtype=float)
    y = np.array([row.value for row in rows], dtype=float)
    if not np.all(np.isfinite(a)):
        raise UsageError("basis terms are not finite on every grid point")
    return a, y


def _residual_stats(y: np.ndarray, pred: np.ndarray) -> ResidualStats:
    resid = y - pred
    if len(y) == 0:
        return ResidualStats(0.0, 0.0, 1.0)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    # zero-variance convention: a perfect constant fit scores 1
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ResidualStats(
        max_abs=float(np.max(np.abs(resid))),
        rms=float(np.sqrt(np.mean(resid * resid))),
        r2=r2,
    )


def fit(grid: SweepGrid, basis: str | Sequence[str] = DEFAULT_BASIS, metric: str | None = None) -> PerfModel:
    """Least-squares fit of the metric's rows over the basis.

    Solved through an orthogonal decomposition (SVD); a rank-deficient design
    matrix yields the minimum-norm solution, flags the model, and names the
    basis subset that is linearly dependent on the rest.
    """
    terms = parse_basis(basis)
    metric = metric or (grid.metrics()[0] if grid.rows else "cost")
    rows = grid.select(metric)
    if len(rows) < len(terms):
        raise UsageError(f"{len(rows)} rows for metric {metric!r} cannot fit {len(terms)} basis terms")
    a, y = _design_matrix(rows, terms)
    coef, _sq, rank, _sv = np.linalg.lstsq(a, y, rcond=None)
    deficient: tuple[str, ...] = ()
    if rank < len(terms):
        _q, _rm, piv = scipy.linalg.qr(a, pivoting=True)
        deficient = tuple(sorted(terms[j].name for j in piv[rank:]))
    return PerfModel(
        basis=tuple(t.name for t in terms),
        coefficients=tuple(float(c) for c in coef),
        residuals=_residual_stats(y, a @ coef),
        metric=metric,
        rank_deficient=bool(rank < len(terms)),
        deficient_terms=deficient,
    )


def predict(model: PerfModel, p: int, n: int) -> float:
    terms = parse_basis(model.basis)
    return float(sum(c * t.fn(p, n) for c, t in zip(model.coefficients, terms)))


def crossval(grid: SweepGrid, basis: str | Sequence[str], k: int, metric: str | None = None) -> ResidualStats:
    """k-fold held-out residuals; folds assigned round-robin by row index."""
    if k < 2:
        raise UsageError("crossval needs k >= 2")
    terms = parse_basis(basis)
    metric = metric or (grid.metrics()[0] if grid.rows else "cost")
    rows = grid.select(metric)
    if len(rows) < k:
        raise UsageError(f"{len(rows)} rows cannot be split into {k} folds")
    a, y = _design_matrix(rows, terms)
    held_pred = np.zeros(len(rows))
    for fold in range(k):
        test = np.array([i % k == fold for i in range(len(rows))])
        coef, _sq, _rank, _sv = np.linalg.lstsq(a[~test], y[~test], rcond=None)
        held_pred[test] = a[test] @ coef
    return _residual_stats(y, held_pred)


# --- surfaces ----------------------------------------------------------------------


@dataclass(frozen=True)
class Surface:
    """Plot-ready matrix (or curve, when one axis has a single value)."""

    kind: str  # "surface" | "curve"
    metric: str
    p_values: tuple[int, ...]
    n_values: tuple[int, ...]
    values: tuple[tuple[float | None, ...], ...]  # rows indexed by p, columns by n
    interpolated: tuple[tuple[bool, ...], ...]


def surface(grid: SweepGrid, metric: str | None = None) -> Surface:
    """Reshape a grid to a p x n matrix, bilinearly filling interior holes.

    Cells with no measurement and no four-neighbour support stay empty (NA);
    with fewer than 2 distinct p or n values the result degrades to a curve.
    """
    metric = metric or (grid.metrics()[0] if grid.rows else "cost")
    rows = grid.select(metric)
    if not rows:
        raise UsageError(f"no rows for metric {metric!r}")
    cells = {(r.p, r.n): r.value for r in rows}
    ps = tuple(sorted({r.p for r in rows}))
    ns = tuple(sorted({r.n for r in rows}))
    values = [[cells.get((p, n)) for n in ns] for p in ps]
    flags = [[False] * len(ns) for _ in ps]
    kind = "surface" if len(ps) >= 2 and len(ns) >= 2 else "curve"
    if kind == "surface":
        for i, p in enumerate(ps):
            for j, n in enumerate(ns):
                if values[i][j] is not None:
                    continue
                filled = _bilinear(values, ps, ns, i, j)
                if filled is not None:
                    values[i][j] = filled
                    flags[i][j] = True
    return Surface(
        kind=kind,
        metric=metric,
        p_values=ps,
        n_values=ns,
        values=tuple(tuple(row) for row in values),
        interpolated=tuple(tuple(row) for row in flags),
    )


def _nearest(values, i, j, di, dj):
    """First present cell walking from (i, j) in direction (di, dj)."""
    rows, cols = len(values), len(values[0])
    i, j = i + di, j + dj
    while 0 <= i < rows and 0 <= j < cols:
        if values[i][j] is not None:
            return i, j
        i, j = i + di, j + dj
    return None


def _bilinear(values, ps, ns, i, j):
    """Average of the two axis-wise linear interpolations through (i, j)."""
    up = _nearest(values, i, j, -1, 0)
    down = _nearest(values, i, j, 1, 0)
    left = _nearest(values, i, j, 0, -1)
    right = _nearest(values, i, j, 0, 1)
    if up is None or down is None or left is None or right is None:
        return None
    (iu, _), (idn, _) = up, down
    (_, jl), (_, jr) = left, right
    t_p = (ps[i] - ps[iu]) / (ps[idn] - ps[iu])
    along_p = values[iu][j] + (values[idn][j] - values[iu][j]) * t_p
    t_n = (ns[j] - ns[jl]) / (ns[jr] - ns[jl])
    along_n = values[i][jl] + (values[i][jr] - values[i][jl]) * t_n
    return (along_p + along_n) / 2.0


# --- serialization -------------------------------------------------------------------

GRID_CSV_HEADER = ["p", "n", "metric", "value", "env_id"]


def grid_to_csv(grid: SweepGrid) -> str:
    lines = ["# bspkit-grid v1"]
    for env_id, env in sorted(grid.environments):
        lines.append(f"# env:{env_id}={json.dumps(env, sort_keys=True)}")
    lines.append(",".join(GRID_CSV_HEADER))
    for row in grid.rows:
        lines.append(f"{row.p},{row.n},{row.metric},{float(row.value)!r},{row.env_id}")
    return "\n".join(lines) + "\n"


def grid_from_csv(text: str) -> SweepGrid:
    rows: list[GridRow] = []
    environments: list[tuple[str, dict]] = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("env:") and "=" in body:
                env_id, payload = body[4:].split("=", 1)
                try:
                    environments.append((env_id, json.loads(payload)))
                except json.JSONDecodeError as exc:
                    raise UsageError(f"malformed grid CSV at line {lineno}: bad environment JSON ({exc})") from exc
            continue
        parts = line.split(",")
        if not header_seen:
            if parts != GRID_CSV_HEADER:
                raise UsageError(f"malformed grid CSV at line {lineno}: expected header {','.join(GRID_CSV_HEADER)!r}")
            header_seen = True
            continue
        try:
            if len(parts) != 5:
                raise ValueError(f"expected 5 columns, got {len(parts)}")
            rows.append(GridRow(p=int(parts[0]), n=int(parts[1]), metric=parts[2], value=float(parts[3]), env_id=parts[4]))
        except ValueError as exc:
            raise UsageError(f"malformed grid CSV at line {lineno}: {exc}") from exc
    if not header_seen:
        raise UsageError("malformed grid CSV at line 1: missing header")
    return SweepGrid(rows=tuple(rows), environments=tuple(environments))


def model_to_json(model: PerfModel, env: dict | None = None) -> str:
    obj = {
        "basis": list(model.basis),
        "coefficients": list(model.coefficients),
        "metric": model.metric,
        "residuals": {
            "max_abs": model.residuals.max_abs,
            "rms": model.residuals.rms,
            "r2": model.residuals.r2,
        },
        "rank_deficient": model.rank_deficient,
        "deficient_terms": list(model.deficient_terms),
    }
    if env is not None:
        obj["environment"] = env
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> PerfModel:
    try:
        obj = json.loads(text)
        return PerfModel(
            basis=tuple(obj["basis"]),
            coefficients=tuple(float(c) for c in obj["coefficients"]),
            residuals=ResidualStats(
                max_abs=float(obj["residuals"]["max_abs"]),
                rms=float(obj["residuals"]["rms"]),
                r2=float(obj["residuals"]["r2"]),
            ),
            metric=obj.get("metric", "cost"),
            rank_deficient=bool(obj.get("rank_deficient", False)),
            deficient_terms=tuple(obj.get("deficient_terms", ())),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed model JSON: {exc}") from exc


def surface_to_csv(surf: Surface) -> str:
    lines: list[str] = []
    if surf.kind == "curve":
        if len(surf.p_values) == 1:
            lines.append(f"# curve metric={surf.metric} p={surf.p_values[0]}")
            lines.append("n,value")
            for j, n in enumerate(surf.n_values):
                v = surf.values[0][j]
                lines.append(f"{n},{'NA' if v is None else repr(float(v))}")
        else:
            lines.append(f"# curve metric={surf.metric} n={surf.n_values[0]}")
            lines.append("p,value")
            for i, p in enumerate(surf.p_values):
                v = surf.values[i][0]
                lines.append(f"{p},{'NA' if v is None else repr(float(v))}")
        return "\n".join(lines) + "\n"
    lines.append(f"# surface metric={surf.metric}")
    lines.append("," + ",".join(str(n) for n in surf.n_values))
    for i, p in enumerate(surf.p_values):
        cells = ["NA" if v is None else repr(float(v)) for v in surf.values[i]]
        lines.append(f"{p}," + ",".join(cells))
    lines.append("# interpolated")
    lines.append("," + ",".join(str(n) for n in surf.n_values))
    for i, p in enumerate(surf.p_values):
        lines.append(f"{p}," + ",".join("1" if f else "0" for f in surf.interpolated[i]))
    return "\n".join(lines) + "\n"


def surface_from_csv(text: str) -> Surface:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise UsageError("malformed surface CSV: missing kind header")
    head = lines[0][1:].strip().split()
    fields = dict(part.split("=", 1) for part in head[1:])
    metric = fields.get("metric", "cost")
    if head[0] == "curve":
        axis = "p" if "p" in fields else "n"
        fixed = int(fields["p" if axis == "p" else "n"])
        pts: list[tuple[int, float | None]] = []
        for ln in lines[2:]:
            key, val = ln.split(",", 1)
            pts.append((int(key), None if val == "NA" else float(val)))
        if axis == "p":
            return Surface(
                kind="curve",
                metric=metric,
                p_values=(fixed,),
                n_values=tuple(k for k, _ in pts),
                values=(tuple(v for _, v in pts),),
                interpolated=(tuple(False for _ in pts),),
            )
        return Surface(
            kind="curve",
            metric=metric,
            p_values=tuple(k for k, _ in pts),
            n_values=(fixed,),
            values=tuple((v,) for _, v in pts),
            interpolated=tuple((False,) for _ in pts),
        )
    if head[0] != "surface":
        raise UsageError(f"malformed surface CSV: unknown kind {head[0]!r}")
    split = lines.index("# interpolated")
    n_values = tuple(int(x) for x in lines[1].split(",")[1:])
    p_values: list[int] = []
    values: list[tuple[float | None, ...]] = []
    for ln in lines[2:split]:
        parts = ln.split(",")
        p_values.append(int(parts[0]))
        values.append(tuple(None if c == "NA" else float(c) for c in parts[1:]))
    flags: list[tuple[bool, ...]] = []
    for ln in lines[split + 2 :]:
        parts = ln.split(",")
        flags.append(tuple(c == "1" for c in parts[1:]))
    return Surface(
        kind="surface",
        metric=metric,
        p_values=tuple(p_values),
        n_values=n_values,
        values=tuple(values),
        interpolated=tuple(flags),
    )
