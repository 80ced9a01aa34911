"""Herglotz optimal control: maximise z(b) where z' = F(x, u, z) and
x' = X(x, u, z), with both ends of x fixed.

Two routes to the extremals:

* :func:`solve_hocp` integrates the state/costate equations directly,
  solving the stationarity condition ``dF/du - mu . dX/du = 0`` for the
  controls at every stage;
* :func:`hocp_as_vakonomic` restates the problem as a vakonomic Herglotz
  problem on ``(x, u)`` with Lagrangian ``F`` and constraints
  ``X - dx/dt = 0``, which :func:`~herglotz.vakonomic.solve_vakonomic_bvp`
  solves.

The convention is maximisation; to minimise a cost, negate ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import math

import numpy as np

from .contact import ContactLagrangian, DiscretePath, default_names
from .dynamics import _solve_small
from .expr import Binary, Expr, Var, parse
from .numkit import (_MIN_DAMPING, H_INNER, H_OUTER, NewtonConfig, OdeConfig, jet_kernel,
                     newton_solve, rk4_integrate, rk4_on_grid, uniform_grid)
from .vakonomic import NameCollisionError, VakonomicProblem

__all__ = [
    "ControlProblem",
    "ControlState",
    "StationarityError",
    "hocp_as_vakonomic",
    "stationarity_residual",
    "stationarity_solve",
    "control_rhs",
    "solve_hocp",
    "rollout",
]

STATIONARITY_TOL = 1e-10


class StationarityError(RuntimeError):
    """The stationarity condition could not be solved for the controls."""


class _Field:
    """Compiled scalar expression over ``(x, u, z)`` with finite-difference jets."""

    def __init__(self, expr: Expr, names: Sequence[str], params: Mapping[str, float]):
        self.expr = expr
        self.fn = expr.compile(list(names), params)
        used = expr.variables()
        self.active = tuple(a in used for a in names)
        self.m = len(names)

    def __call__(self, *x):
        return self.fn(*x)

    def jet(self, x: list, rows: tuple[int, ...] = ()):
        return jet_kernel(self.m, rows, H_OUTER, H_INNER, self.active)(self.fn, *x)


@dataclass(frozen=True)
class ControlProblem:
    """``X`` (one expression per state), running payoff ``F`` and boundary data.

    Expressions are written over ``x1..xn``, ``u1..um``, ``z`` and ``params``.
    """

    X: tuple[Expr, ...]
    F: Expr
    m: int
    x_a: np.ndarray
    x_b: np.ndarray
    z0: float = 0.0
    t_span: tuple[float, float] = (0.0, 1.0)
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "X", tuple(self.X))
        object.__setattr__(self, "params", dict(self.params))
        n = len(self.X)
        if n == 0 or self.m < 1:
            raise ValueError("need at least one state and one control")
        for name in ("x_a", "x_b"):
            a = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if a.shape != (n,):
                raise ValueError(f"{name} must have {n} components")
            object.__setattr__(self, name, a)
        names = self.names
        clash = set(names) & set(self.params)
        if clash:
            raise NameCollisionError(f"parameters shadow variables: {sorted(clash)}")
        for e in (*self.X, self.F):
            extra = e.variables() - set(names) - set(self.params)
            if extra:
                raise ValueError(f"expression {e} uses undeclared variables {sorted(extra)}")
        object.__setattr__(self, "_X", tuple(_Field(e, names, self.params) for e in self.X))
        object.__setattr__(self, "_F", _Field(self.F, names, self.params))

    @classmethod
    def from_strings(cls, X: Sequence[str], F: str, m: int, x_a, x_b, z0: float = 0.0,
                     t_span=(0.0, 1.0), params: Mapping[str, float] | None = None):
        params = dict(params or {})
        n = len(X)
        allowed = [*default_names(n, "x"), *default_names(m, "u"), "z", *params]
        return cls(tuple(parse(s, allowed) for s in X), parse(F, allowed), m,
                   x_a, x_b, z0, t_span, params)

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def names(self) -> tuple[str, ...]:
        return (*default_names(self.n, "x"), *default_names(self.m, "u"), "z")

    def vector_field(self, x, u, z) -> np.ndarray:
        return np.array([f(*x, *u, z) for f in self._X])

    def payoff_rate(self, x, u, z) -> float:
        return self._F(*x, *u, z)


@dataclass(frozen=True)
class ControlState:
    x: np.ndarray
    mu: np.ndarray
    z: float
    u: np.ndarray

    def __post_init__(self):
        for name in ("x", "mu", "u"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "z", float(self.z))


def hocp_as_vakonomic(cp: ControlProblem) -> VakonomicProblem:
    """Vakonomic problem on configuration ``(x, u)`` with ``L = F`` and
    constraints ``psi_i = X_i - vx_i``.

    Control velocities ``vu*`` never occur, so the controls become algebraic
    coordinates of the vakonomic problem; their boundary entries are zero
    and only serve as a starting guess.
    """
    n, m = cp.n, cp.m
    xs, us = default_names(n, "x"), default_names(m, "u")
    vx, vu = default_names(n, "vx"), default_names(m, "vu")
    clash = (set(vx) | set(vu)) & set(cp.params)
    if clash:
        raise NameCollisionError(f"parameters collide with generated velocity names: {sorted(clash)}")
    L = ContactLagrangian(cp.F, (*xs, *us), (*vx, *vu), "z", cp.params)
    constraints = tuple(Binary("-", X, Var(v)) for X, v in zip(cp.X, vx))
    q0 = np.concatenate([cp.x_a, np.zeros(m)])
    q1 = np.concatenate([cp.x_b, np.zeros(m)])
    return VakonomicProblem(L, constraints, q0, q1, cp.z0, cp.t_span)


def _stationarity(cp: ControlProblem, x: list, mu: list, z: float, u: list, with_jac: bool):
    """Residual ``dF/du - mu . dX/du`` and, on request, its Jacobian in ``u``."""
    n, m = cp.n, cp.m
    args = [*x, *u, z]
    rows = tuple(range(n, n + m)) if with_jac else ()
    _, g, s = cp._F.jet(args, rows)
    res = [g[n + a] for a in range(m)]
    jac = [[s[a][n + b] for b in range(m)] for a in range(m)] if with_jac else None
    for j, X in enumerate(cp._X):
        mj = mu[j]
        if mj == 0.0:
            continue
        _, gx, sx = X.jet(args, rows)
        for a in range(m):
            res[a] -= mj * gx[n + a]
            if with_jac:
                ra, sa = jac[a], sx[a]
                for b in range(m):
                    ra[b] -= mj * sa[n + b]
    return res, jac


def stationarity_residual(cp: ControlProblem, x, mu, z, u) -> np.ndarray:
    """``dF/du_a - sum_j mu_j dX_j/du_a`` for each control."""
    res, _ = _stationarity(cp, list(map(float, x)), list(map(float, mu)), float(z),
                           list(map(float, np.atleast_1d(u))), False)
    return np.array(res)


def stationarity_solve(cp: ControlProblem, x, mu, z, u_guess,
                       newton: NewtonConfig = NewtonConfig(abs_tol=STATIONARITY_TOL)) -> np.ndarray:
    """Controls satisfying the stationarity condition, by damped Newton from ``u_guess``.

    The Jacobian is the nested finite-difference Hessian of ``F - mu . X``
    in the controls.
    """
    x = [float(a) for a in np.atleast_1d(x)]
    mu = [float(a) for a in np.atleast_1d(mu)]
    z = float(z)
    u = [float(a) for a in np.atleast_1d(u_guess)]
    if len(u) != cp.m:
        raise ValueError(f"control guess must have {cp.m} components")
    try:
        res, _ = _stationarity(cp, x, mu, z, u, False)
        norm = max(abs(r) for r in res)
        for _ in range(newton.max_iter):
            if norm <= newton.abs_tol:
                return np.array(u)
            res, jac = _stationarity(cp, x, mu, z, u, True)
            step = _solve_small(jac, [-r for r in res], "stationarity Jacobian")
            lam = newton.damping
            while True:
                trial = [a + lam * d for a, d in zip(u, step)]
                rt, _ = _stationarity(cp, x, mu, z, trial, False)
                nt = max(abs(r) for r in rt)
                if nt < norm or lam <= _MIN_DAMPING:
                    break
                lam *= 0.5
            if not math.isfinite(nt):
                break
            u, res, norm = trial, rt, nt
        if norm <= newton.abs_tol:
            return np.array(u)
        raise StationarityError(f"residual {norm:.3e} after {newton.max_iter} iterations")
    except StationarityError as exc:
        raise StationarityError(f"stationarity solve failed at x={x}, mu={mu}, z={z}: {exc}") from exc
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise StationarityError(f"stationarity solve failed at x={x}, mu={mu}, z={z}: {exc}") from exc


def _rates(cp: ControlProblem, x: list, mu: list, z: float, u: list):
    n = cp.n
    args = [*x, *u, z]
    fv, fg, _ = cp._F.jet(args)
    zi = n + cp.m
    dx = []
    xg = []
    for X in cp._X:
        xv, g, _ = X.jet(args)
        dx.append(xv)
        xg.append(g)
    dmu = []
    for i in range(n):
        acc = mu[i] * fg[zi]
        for j in range(n):
            acc -= mu[j] * xg[j][i]
        acc += fg[i]
        for j in range(n):
            acc -= xg[j][zi] * mu[i] * mu[j]
        dmu.append(acc)
    return dx, dmu, fv


def control_rhs(cp: ControlProblem, s: ControlState):
    """``(dx, dmu, dz)`` at ``s`` after re-solving the controls from ``s.u``.

    ``dmu_i = mu_i F_z - mu_j dX_j/dx_i + F_{x_i} - dX_j/dz mu_i mu_j``.
    """
    u = stationarity_solve(cp, s.x, s.mu, s.z, s.u)
    dx, dmu, dz = _rates(cp, s.x.tolist(), s.mu.tolist(), s.z, u.tolist())
    return np.array(dx), np.array(dmu), dz


def _integrate(cp: ControlProblem, mu_a, cfg: OdeConfig, u_guess=None, endpoint_only=False):
    n, m = cp.n, cp.m
    u_prev = [np.zeros(m) if u_guess is None else np.atleast_1d(np.asarray(u_guess, float))]

    def rhs(t, y):
        x, mu, z = y[:n], y[n:2 * n], y[2 * n]
        u = stationarity_solve(cp, x, mu, z, u_prev[0])
        u_prev[0] = u
        dx, dmu, dz = _rates(cp, x.tolist(), mu.tolist(), float(z), u.tolist())
        return np.array([*dx, *dmu, dz])

    y0 = np.concatenate([cp.x_a, np.atleast_1d(np.asarray(mu_a, float)), [cp.z0]])
    times, ys = rk4_integrate(rhs, y0, cfg)
    if endpoint_only:
        return ys[-1, :n]
    x, mu, z = ys[:, :n], ys[:, n:2 * n], ys[:, 2 * n]
    u = np.empty((times.size, m))
    guess = u_prev[0] if u_guess is None else np.atleast_1d(np.asarray(u_guess, float))
    for r in range(times.size):
        guess = stationarity_solve(cp, x[r], mu[r], z[r], guess)
        u[r] = guess
    v = np.array([cp.vector_field(x[r], u[r], z[r]) for r in range(times.size)])
    return DiscretePath(times, x, v, z, mu, u)


def solve_hocp(cp: ControlProblem, mu_a_guess=None, cfg: OdeConfig | None = None,
               newton: NewtonConfig = NewtonConfig(), u_guess=None,
               stats: dict | None = None) -> DiscretePath:
    """Shoot on the initial costate until ``x(b) = x_b``.

    Returns a path with ``q = x``, ``v = X(x, u, z)``, ``z``, ``mu`` and ``u``.
    """
    n = cp.n
    if cfg is None:
        cfg = OdeConfig(1e-3, cp.t_span)
    mu0 = np.zeros(n) if mu_a_guess is None else np.atleast_1d(np.asarray(mu_a_guess, float))
    if mu0.shape != (n,):
        raise ValueError(f"costate guess must have {n} components")

    def residual(mu_a):
        return _integrate(cp, mu_a, cfg, u_guess, endpoint_only=True) - cp.x_b

    mu_a = newton_solve(residual, mu0, newton, stats=stats)
    return _integrate(cp, mu_a, cfg, u_guess)


def rollout(cp: ControlProblem, times: np.ndarray, controls: np.ndarray,
            cfg: OdeConfig | None = None) -> DiscretePath:
    """Integrate state and payoff under piecewise-constant controls.

    ``controls[k]`` holds on ``[times[k], times[k+1])``; integration uses
    RK4 with step ``cfg.dt`` inside each piece.
    """
    times = np.asarray(times, float)
    controls = np.atleast_2d(np.asarray(controls, float))
    if controls.shape[0] == 1 and cp.m != 1:
        controls = controls.reshape(-1, cp.m)
    if controls.ndim == 2 and controls.shape[1] != cp.m:
        controls = controls.reshape(-1, cp.m)
    if controls.shape[0] != times.size - 1:
        raise ValueError("one control value per interval")
    dt = (cfg.dt if cfg is not None else 1e-3)
    n = cp.n
    y = np.concatenate([cp.x_a, [cp.z0]])
    out_t, out_y, out_u = [times[0]], [y], [controls[0]]
    for k in range(times.size - 1):
        u = controls[k]

        def rhs(t, yy, u=u):
            x, z = yy[:n], yy[n]
            return np.array([*cp.vector_field(x, u, z), cp.payoff_rate(x, u, z)])

        grid = uniform_grid(OdeConfig(dt, (times[k], times[k + 1])))
        ys = rk4_on_grid(rhs, grid, y)
        y = ys[-1]
        out_t.extend(grid[1:])
        out_y.extend(ys[1:])
        out_u.extend([u] * (grid.size - 1))
    ys = np.array(out_y)
    us = np.array(out_u)
    v = np.array([cp.vector_field(ys[r, :n], us[r], ys[r, n]) for r in range(ys.shape[0])])
    return DiscretePath(np.array(out_t), ys[:, :n], v, ys[:, n], None, us)
