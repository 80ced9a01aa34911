"""Command-line front end: load a problem file, solve it, write a CSV
trajectory and a JSON report whose residuals are recomputed from the CSV.

Problem files are INI documents::

    [problem]
    kind = herglotz_ivp        ; herglotz_ivp | herglotz_bvp | vakonomic | hocp
    n = 1
    t0 = 0
    t1 = 10

    [expressions]
    L = v1^2/2 - w^2*q1^2/2 - g*z

    [params]
    w = 1
    g = 0.1

    [boundary]
    q0 = 1
    v0 = 0

    [solver]
    dt = 1e-3

See the README for the full schema.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .contact import ContactLagrangian, DiscretePath, default_names, first_variation, random_variation
from .control import ControlProblem, StationarityError, _rates as _control_rates, solve_hocp, stationarity_residual
from .dynamics import ContactState, SingularMatrixError, integrate_herglotz
from .expr import DomainError, Expr, ExprError, ParseError, parse
from .numkit import IntegrationError, NewtonConfig, NewtonError, OdeConfig
from .vakonomic import (AbnormalExtremalError, ExtendedState, InconsistentStateError, VakonomicProblem,
                        integrate_vakonomic, solve_vakonomic_bvp, stationarity_residuals)

__all__ = ["ProblemFile", "RunReport", "ProblemFileError", "load_problem", "run", "read_csv",
           "recompute_residuals", "main"]

KINDS = ("herglotz_ivp", "herglotz_bvp", "vakonomic", "hocp")
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4
DEFAULT_TOL = 1e-6
VARIATION_TOL = 1e-4
VARIATION_COUNT = 20
CHECK_STEP = 2e-4

_SCHEMA = {
    "problem": {"kind", "n", "m", "k", "t0", "t1"},
    "boundary": {"q0", "v0", "q1", "mu0", "z0", "x_a", "x_b"},
    "solver": {"dt", "tol", "newton_tol", "max_iter", "v0_guess", "mu0_guess", "mu_a_guess", "u_guess"},
    "output": {"csv", "report"},
}


class ProblemFileError(ValueError):
    """Schema or expression error in a problem file; the message names the field."""


class SolverFailure(RuntimeError):
    pass


@dataclass
class ProblemFile:
    kind: str
    n: int
    m: int
    k: int
    t_span: tuple[float, float]
    params: dict[str, float]
    L: Expr | None
    psi: tuple[Expr, ...]
    X: tuple[Expr, ...]
    F: Expr | None
    boundary: dict[str, np.ndarray]
    z0: float
    dt: float = 1e-3
    tol: float = DEFAULT_TOL
    newton: NewtonConfig = NewtonConfig()
    guesses: dict[str, np.ndarray] = field(default_factory=dict)
    csv_path: Path | None = None
    report_path: Path | None = None
    source: Path | None = None

    @property
    def is_bvp(self) -> bool:
        return self.kind in ("herglotz_bvp", "hocp") or (self.kind == "vakonomic" and "q1" in self.boundary)


@dataclass
class RunReport:
    kind: str
    grid_points: int
    dt: float
    solver: dict
    residuals: dict[str, float]
    checks: dict[str, dict]
    wall_time_s: float

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid_points": self.grid_points, "dt": self.dt,
                "solver": self.solver, "residuals": self.residuals, "checks": self.checks,
                "passed": self.passed, "wall_time_s": self.wall_time_s}


# ---------------------------------------------------------------- loading

def _number(section: str, key: str, raw: str) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise ProblemFileError(f"{section}.{key}: expected a number, got {raw!r}") from None
    if not math.isfinite(x):
        raise ProblemFileError(f"{section}.{key}: must be finite")
    return x


def _integer(section: str, key: str, raw: str, low: int) -> int:
    try:
        x = int(raw)
    except ValueError:
        raise ProblemFileError(f"{section}.{key}: expected an integer, got {raw!r}") from None
    if x < low:
        raise ProblemFileError(f"{section}.{key}: must be at least {low}")
    return x


def _vector(section: str, key: str, raw: str, size: int) -> np.ndarray:
    parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
    values = np.array([_number(section, key, p) for p in parts])
    if values.size != size:
        raise ProblemFileError(f"{section}.{key}: expected {size} components, got {values.size}")
    return values


def _expression(key: str, source: str, allowed: Sequence[str]) -> Expr:
    try:
        return parse(source, allowed)
    except ParseError as exc:
        raise ProblemFileError(f"expressions.{key}: {exc}") from exc


def _indexed(exprs: dict[str, str], prefix: str, count: int, kind: str) -> list[tuple[str, str]]:
    keys = sorted((k for k in exprs if re.fullmatch(rf"{prefix}\d+", k)), key=lambda k: int(k[len(prefix):]))
    want = [f"{prefix}{i + 1}" for i in range(count)]
    if keys != want:
        missing = sorted(set(want) - set(keys))
        extra = sorted(set(keys) - set(want))
        if missing:
            raise ProblemFileError(f"expressions.{missing[0]} required for kind={kind}")
        raise ProblemFileError(f"expressions.{extra[0]}: index out of range (expected {count})")
    return [(k, exprs[k]) for k in want]


def load_problem(path: str | Path) -> ProblemFile:
    """Read and fully validate a problem file; all expressions are parsed here."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ProblemFileError(f"{path}: {exc}") from exc

    for section in cp.sections():
        if section in ("expressions", "params"):
            continue
        if section not in _SCHEMA:
            raise ProblemFileError(f"{section}: unknown section")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ProblemFileError(f"{section}.{key}: unknown field")

    def get(section: str, key: str) -> str | None:
        return cp.get(section, key, fallback=None)

    def need(section: str, key: str, kind: str) -> str:
        raw = get(section, key)
        if raw is None or not raw.strip():
            raise ProblemFileError(f"{section}.{key} required for kind={kind}")
        return raw

    kind = get("problem", "kind")
    if kind is None:
        raise ProblemFileError("problem.kind required")
    if kind not in KINDS:
        raise ProblemFileError(f"problem.kind: must be one of {', '.join(KINDS)}, got {kind!r}")
    n = _integer("problem", "n", need("problem", "n", kind), 1)
    m = _integer("problem", "m", need("problem", "m", kind), 1) if kind == "hocp" else 0
    if kind != "hocp" and get("problem", "m") is not None:
        raise ProblemFileError("problem.m: only meaningful for kind=hocp")
    t0 = _number("problem", "t0", get("problem", "t0") or "0")
    t1 = _number("problem", "t1", get("problem", "t1") or "1")
    if not t1 > t0:
        raise ProblemFileError("problem.t1: must exceed problem.t0")

    params: dict[str, float] = {}
    if cp.has_section("params"):
        for key, raw in cp["params"].items():
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
                raise ProblemFileError(f"params.{key}: not a valid identifier")
            params[key] = _number("params", key, raw)

    exprs = dict(cp["expressions"]) if cp.has_section("expressions") else {}
    if kind == "hocp":
        state_vars = [*default_names(n, "x"), *default_names(m, "u"), "z"]
    else:
        state_vars = [*default_names(n, "q"), *default_names(n, "v"), "z"]
    clash = sorted(set(params) & set(state_vars))
    if clash:
        raise ProblemFileError(f"params.{clash[0]}: shadows a state variable")
    allowed = [*state_vars, *params]

    L = F = None
    psi: list[Expr] = []
    X: list[Expr] = []
    if kind == "hocp":
        for key in exprs:
            if key != "F" and not re.fullmatch(r"X\d+", key):
                raise ProblemFileError(f"expressions.{key}: not used by kind=hocp")
        X = [_expression(key, src, allowed) for key, src in _indexed(exprs, "X", n, kind)]
        F = _expression("F", need("expressions", "F", kind), allowed)
        k = n
    else:
        for key in exprs:
            if key != "L" and not (kind == "vakonomic" and re.fullmatch(r"psi\d+", key)):
                raise ProblemFileError(f"expressions.{key}: not used by kind={kind}")
        L = _expression("L", need("expressions", "L", kind), allowed)
        if kind == "vakonomic":
            k = _integer("problem", "k", get("problem", "k") or "0", 0)
            psi = [_expression(key, src, allowed) for key, src in _indexed(exprs, "psi", k, kind)]
        else:
            if get("problem", "k") not in (None, "0"):
                raise ProblemFileError(f"problem.k: must be 0 for kind={kind}")
            k = 0
        mu_names = set(default_names(k, "mu")) | {f"vmu{i + 1}" for i in range(k)}
        taken = sorted(mu_names & set(params))
        if taken:
            raise ProblemFileError(f"params.{taken[0]}: collides with a multiplier name")

    boundary: dict[str, np.ndarray] = {}
    if kind == "hocp":
        for key in ("x_a", "x_b"):
            boundary[key] = _vector("boundary", key, need("boundary", key, kind), n)
        allowed_b = {"x_a", "x_b", "z0"}
    elif kind == "herglotz_ivp":
        for key in ("q0", "v0"):
            boundary[key] = _vector("boundary", key, need("boundary", key, kind), n)
        allowed_b = {"q0", "v0", "z0"}
    elif kind == "herglotz_bvp":
        for key in ("q0", "q1"):
            boundary[key] = _vector("boundary", key, need("boundary", key, kind), n)
        allowed_b = {"q0", "q1", "z0"}
    else:
        boundary["q0"] = _vector("boundary", "q0", need("boundary", "q0", kind), n)
        if get("boundary", "q1") is not None:
            boundary["q1"] = _vector("boundary", "q1", get("boundary", "q1"), n)
            allowed_b = {"q0", "q1", "z0"}
        elif get("boundary", "v0") is not None:
            boundary["v0"] = _vector("boundary", "v0", get("boundary", "v0"), n)
            if k:
                boundary["mu0"] = _vector("boundary", "mu0", need("boundary", "mu0", kind), k)
            allowed_b = {"q0", "v0", "mu0", "z0"}
        else:
            raise ProblemFileError(f"boundary.q1 or boundary.v0 required for kind={kind}")
    if cp.has_section("boundary"):
        for key in cp["boundary"]:
            if key not in allowed_b:
                raise ProblemFileError(f"boundary.{key}: not used by kind={kind}")
    z0 = _number("boundary", "z0", get("boundary", "z0") or "0")

    dt = _number("solver", "dt", get("solver", "dt") or "1e-3")
    if not dt > 0:
        raise ProblemFileError("solver.dt: must be positive")
    tol = _number("solver", "tol", get("solver", "tol") or repr(DEFAULT_TOL))
    if not tol > 0:
        raise ProblemFileError("solver.tol: must be positive")
    newton_tol = _number("solver", "newton_tol", get("solver", "newton_tol") or "1e-10")
    if not newton_tol > 0:
        raise ProblemFileError("solver.newton_tol: must be positive")
    max_iter = _integer("solver", "max_iter", get("solver", "max_iter") or "50", 1)
    guesses: dict[str, np.ndarray] = {}
    sizes = {"v0_guess": n, "mu0_guess": k, "mu_a_guess": n, "u_guess": m}
    for key, size in sizes.items():
        raw = get("solver", key)
        if raw is not None:
            guesses[key] = _vector("solver", key, raw, size)

    base = path.parent
    csv_raw, report_raw = get("output", "csv"), get("output", "report")
    return ProblemFile(
        kind=kind, n=n, m=m, k=k, t_span=(t0, t1), params=params, L=L, psi=tuple(psi),
        X=tuple(X), F=F, boundary=boundary, z0=z0, dt=dt, tol=tol,
        newton=NewtonConfig(abs_tol=newton_tol, max_iter=max_iter), guesses=guesses,
        csv_path=base / csv_raw if csv_raw else None,
        report_path=base / report_raw if report_raw else None, source=path)


# ---------------------------------------------------------------- building

def _lagrangian(pf: ProblemFile) -> ContactLagrangian:
    return ContactLagrangian(pf.L, default_names(pf.n, "q"), default_names(pf.n, "v"), "z", pf.params)


def _vakonomic_problem(pf: ProblemFile) -> VakonomicProblem:
    q0 = pf.boundary["q0"]
    q1 = pf.boundary.get("q1", q0)
    return VakonomicProblem(_lagrangian(pf), pf.psi, q0, q1, pf.z0, pf.t_span)


def _control_problem(pf: ProblemFile) -> ControlProblem:
    return ControlProblem(pf.X, pf.F, pf.m, pf.boundary["x_a"], pf.boundary["x_b"], pf.z0,
                          pf.t_span, pf.params)


def columns(pf: ProblemFile) -> list[str]:
    """CSV header for this kind of problem."""
    n, k = pf.n, pf.k
    if pf.kind == "hocp":
        return ["t", *default_names(n, "x"), *default_names(n, "mu"), *default_names(pf.m, "u"), "z"]
    mu = list(default_names(k, "mu")) if pf.kind == "vakonomic" and k else []
    return ["t", *default_names(n, "q"), *default_names(n, "v"), *mu, "z"]


def solve(pf: ProblemFile) -> tuple[DiscretePath, dict]:
    """Dispatch to the solver for ``pf.kind``; returns the path and solver statistics."""
    cfg = OdeConfig(pf.dt, pf.t_span)
    stats: dict = {}
    g = pf.guesses
    if pf.kind == "herglotz_ivp":
        s0 = ContactState(pf.boundary["q0"], pf.boundary["v0"], pf.z0)
        return integrate_herglotz(_lagrangian(pf), s0, cfg), stats
    if pf.kind == "hocp":
        cp = _control_problem(pf)
        path = solve_hocp(cp, g.get("mu_a_guess"), cfg, pf.newton, g.get("u_guess"), stats=stats)
        return path, stats
    p = _vakonomic_problem(pf)
    if pf.is_bvp:
        path = solve_vakonomic_bvp(p, g.get("v0_guess"), g.get("mu0_guess"), cfg, pf.newton, stats=stats)
        return path, stats
    s0 = ExtendedState(pf.boundary["q0"], pf.boundary["v0"], pf.z0, pf.boundary.get("mu0", np.zeros(0)))
    return integrate_vakonomic(p, s0, cfg), stats


def table(pf: ProblemFile, path: DiscretePath) -> np.ndarray:
    cols = [path.times[:, None]]
    if pf.kind == "hocp":
        cols += [path.q, path.mu, path.u]
    else:
        cols += [path.q, path.v]
        if pf.kind == "vakonomic" and pf.k:
            cols.append(path.mu)
    cols.append(path.z[:, None])
    return np.hstack(cols)


def format_csv(header: Sequence[str], data: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in data.tolist():
        buf.write(",".join("%.17g" % x for x in row) + "\n")
    return buf.getvalue()


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a trajectory CSV, keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------- residuals

def _stack(cols: dict[str, np.ndarray], prefix: str, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros((cols["t"].size, 0))
    return np.column_stack([cols[f"{prefix}{i + 1}"] for i in range(count)])


def _rate(t: np.ndarray, y: np.ndarray, width: int = 5) -> np.ndarray:
    """Time derivative of sampled columns by differentiating the Lagrange
    interpolant through ``width`` neighbouring nodes (fourth order for 5).

    Windows are centred where possible and shifted inward at the ends; any
    grid spacing is allowed.
    """
    size = t.size
    width = min(width, size)
    start = np.clip(np.arange(size) - width // 2, 0, size - width)
    idx = start[:, None] + np.arange(width)[None, :]
    nodes = t[idx]
    te = t[:, None]
    at = np.arange(size) - start
    weights = np.zeros((size, width))
    for i in range(width):
        num = np.zeros(size)
        den = np.ones(size)
        for m in range(width):
            if m != i:
                den *= nodes[:, i] - nodes[:, m]
        # derivative of prod_{m != i} (t - x_m) at t = t_e
        for l in range(width):
            if l == i:
                continue
            term = np.ones(size)
            for m in range(width):
                if m != i and m != l:
                    term *= te[:, 0] - nodes[:, m]
            num += term
        weights[:, i] = num / den
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        return np.einsum("kw,kw->k", weights, y[idx])
    return np.einsum("kw,kwc->kc", weights, y[idx])


def _herglotz_residual(L: ContactLagrangian, q, v, z, vdot) -> np.ndarray:
    """``M vdot - (L_q - L_vq v - L_vz L + L_v L_z)`` with a single-scale
    stencil (step 2e-4 at both levels), independent of the solver's steps."""
    n = L.n
    val, g, s = L.jet(q, v, z, h_outer=CHECK_STEP, h_inner=1e-5, h_nested=CHECK_STEP)
    mass = s[:, n:2 * n]
    rhs = g[:n] - s[:, :n] @ v - s[:, 2 * n] * val + g[n:2 * n] * g[2 * n]
    return mass @ vdot - rhs


def recompute_residuals(pf: ProblemFile, cols: dict[str, np.ndarray]) -> dict[str, float]:
    """Residuals computed only from CSV columns.

    Time derivatives come from five-point Lagrange interpolation of the
    columns, so rate residuals carry an O(dt^4) discretisation error.
    """
    t, z = cols["t"], cols["z"]
    n = pf.n
    out: dict[str, float] = {}
    zdot = _rate(t, z)
    if pf.kind == "hocp":
        cp = _control_problem(pf)
        x, mu, u = _stack(cols, "x", n), _stack(cols, "mu", n), _stack(cols, "u", pf.m)
        xdot, mudot = _rate(t, x), _rate(t, mu)
        c = s = e = f = 0.0
        for r in range(t.size):
            dx, dmu, fz = _control_rates(cp, x[r].tolist(), mu[r].tolist(), float(z[r]), u[r].tolist())
            c = max(c, float(np.max(np.abs(np.array(dx) - xdot[r]))))
            e = max(e, float(np.max(np.abs(np.array(dmu) - mudot[r]))))
            f = max(f, abs(fz - zdot[r]))
            s = max(s, float(np.max(np.abs(stationarity_residual(cp, x[r], mu[r], z[r], u[r])))))
        out["constraint_max"] = c
        out["z_rate_max"] = f
        out["costate_rate_max"] = e
        out["stationarity_max"] = s
        out["x_start"] = float(np.max(np.abs(x[0] - pf.boundary["x_a"])))
        out["x_end"] = float(np.max(np.abs(x[-1] - pf.boundary["x_b"])))
        return out

    L = _lagrangian(pf)
    q, v = _stack(cols, "q", n), _stack(cols, "v", n)
    qdot, vdot = _rate(t, q), _rate(t, v)
    out["q_rate_max"] = float(np.max(np.abs(qdot - v)))
    lv = np.array([L(q[r], v[r], z[r]) for r in range(t.size)])
    out["z_rate_max"] = float(np.max(np.abs(zdot - lv)))
    if pf.kind == "vakonomic" and pf.k:
        p = _vakonomic_problem(pf)
        mu = _stack(cols, "mu", pf.k)
        out["constraint_max"] = float(max(np.max(np.abs(p.psi_values(q[r], v[r], z[r])))
                                          for r in range(t.size)))
        if p.algebraic:
            out["stationarity_max"] = float(max(
                np.max(np.abs(stationarity_residuals(p, q[r], mu[r], z[r], v[r]))) for r in range(t.size)))
    else:
        out["herglotz_max"] = float(max(np.max(np.abs(_herglotz_residual(L, q[r], v[r], z[r], vdot[r])))
                                        for r in range(t.size)))
    out["q_start"] = float(np.max(np.abs(q[0] - pf.boundary["q0"])))
    if "q1" in pf.boundary:
        out["q_end"] = float(np.max(np.abs(q[-1] - pf.boundary["q1"])))
    return out


# ---------------------------------------------------------------- running

def _solver_errors():
    return (NewtonError, IntegrationError, SingularMatrixError, StationarityError,
            AbnormalExtremalError, DomainError, np.linalg.LinAlgError)


def run(pf: ProblemFile, out: Path | None = None) -> tuple[DiscretePath, RunReport]:
    """Solve, write CSV and report, and check every invariant against ``pf.tol``."""
    if out is None:
        out = pf.csv_path or (pf.source.with_suffix(".csv") if pf.source else Path("trajectory.csv"))
        report_path = pf.report_path or out.with_suffix(".report.json")
    else:
        report_path = out.with_suffix(".report.json")
    start = time.perf_counter()
    try:
        path, stats = solve(pf)
    except _solver_errors() as exc:
        raise SolverFailure(f"{pf.kind} solver failed: {exc}") from exc
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_csv(columns(pf), table(pf, path)))
    residuals = recompute_residuals(pf, read_csv(out))
    checks = {name: {"value": value, "tol": pf.tol, "pass": bool(value <= pf.tol)}
              for name, value in residuals.items()}
    report = RunReport(pf.kind, int(path.times.size), pf.dt, stats, residuals, checks,
                       time.perf_counter() - start)
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return path, report


def certify(pf: ProblemFile, seed: int, tol: float) -> tuple[list[float], bool]:
    """First variation of the contact action along the solved path for random variations."""
    if pf.kind not in ("herglotz_ivp", "herglotz_bvp"):
        raise ProblemFileError(f"problem.kind: variation certification needs an unconstrained kind, got {pf.kind}")
    try:
        path, _ = solve(pf)
    except _solver_errors() as exc:
        raise SolverFailure(f"{pf.kind} solver failed: {exc}") from exc
    L = _lagrangian(pf)
    rng = np.random.default_rng(seed)
    values = [first_variation(L, path, pf.z0, random_variation(path.times, pf.n, rng))
              for _ in range(VARIATION_COUNT)]
    return values, all(abs(v) <= tol for v in values)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="herglotz", description="Herglotz variational problem solver")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "solve and write CSV plus report"),
                       ("check", "parse and validate only"),
                       ("variation", "first-variation certification of the solved trajectory")):
        p = sub.add_parser(name, help=text)
        p.add_argument("file", type=Path)
        p.add_argument("--dt", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int, default=0)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        pf = load_problem(args.file)
        if args.dt is not None:
            if not args.dt > 0:
                raise ProblemFileError("--dt: must be positive")
            pf.dt = args.dt
        if args.tol is not None and not args.tol > 0:
            raise ProblemFileError("--tol: must be positive")
        if args.command == "check":
            print(f"ok: kind={pf.kind} n={pf.n} m={pf.m} k={pf.k}")
            return EXIT_OK
        if args.command == "variation":
            tol = args.tol if args.tol is not None else VARIATION_TOL
            values, ok = certify(pf, args.seed, tol)
            for i, v in enumerate(values):
                print(f"variation {i:2d}: {v:+.3e}")
            print(f"{'PASS' if ok else 'FAIL'}: max |dA| = {max(abs(v) for v in values):.3e} (tol {tol:g})")
            return EXIT_OK if ok else EXIT_INVARIANT
        if args.tol is not None:
            pf.tol = args.tol
        _, report = run(pf, args.out)
    except (ProblemFileError, InconsistentStateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ExprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for name, c in report.checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name} = {c['value']:.3e} (tol {c['tol']:g})")
    if report.solver:
        print(f"solver: {report.solver['iterations']} Newton iterations, residual {report.solver['residual']:.3e}")
    return EXIT_OK if report.passed else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
