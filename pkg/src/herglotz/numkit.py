"""Finite differences, fixed-step RK4 and damped Newton.

Everything here is pure; the solvers further up pass plain callables.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "FdConfig",
    "OdeConfig",
    "NewtonConfig",
    "IntegrationError",
    "NewtonError",
    "SingularJacobianError",
    "MaxIterationsError",
    "fd_partial",
    "fd_gradient",
    "fd_second_partial",
    "fd_jacobian",
    "fd_jet",
    "jet_kernel",
    "rk4_integrate",
    "rk4_on_grid",
    "uniform_grid",
    "newton_solve",
    "solve_linear",
]

H_INNER = 1e-6
H_OUTER = 1e-4
# inner step of nested second differences; at 1e-6 rounding (eps*|f|/(h*H))
# dominates and costs about five digits
H_NESTED = 1e-4
_MIN_DAMPING = 1.0 / 1024


@dataclass(frozen=True)
class FdConfig:
    h: float = H_INNER
    scheme: str = "central"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")
        if self.scheme != "central":
            raise ValueError(f"unsupported scheme {self.scheme!r}")


@dataclass(frozen=True)
class OdeConfig:
    dt: float
    t_span: tuple[float, float] = (0.0, 1.0)
    method: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValueError("t_span must satisfy t1 > t0")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0
    fd: FdConfig = FdConfig()

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


class IntegrationError(RuntimeError):
    def __init__(self, t: float, cause: Exception):
        super().__init__(f"right-hand side failed at t={t!r}: {cause}")
        self.t = t
        self.cause = cause


class NewtonError(RuntimeError):
    """Base class for Newton failures; carries the best iterate seen."""

    def __init__(self, message: str, x: np.ndarray, residual: float, iterations: int):
        super().__init__(f"{message} (best residual {residual:.3e} after {iterations} iterations)")
        self.x = x
        self.residual = residual
        self.iterations = iterations


class SingularJacobianError(NewtonError):
    pass


class MaxIterationsError(NewtonError):
    pass


def fd_partial(f: Callable[..., float], i: int, x: Sequence[float],
               cfg: FdConfig = FdConfig()) -> float:
    """Central difference of ``f(*x)`` along coordinate ``i``."""
    h = cfg.h
    xp = list(x)
    xm = list(x)
    xp[i] += h
    xm[i] -= h
    return (f(*xp) - f(*xm)) / (2.0 * h)


def fd_gradient(f: Callable[..., float], x: Sequence[float],
                cfg: FdConfig = FdConfig()) -> np.ndarray:
    return np.array([fd_partial(f, i, x, cfg) for i in range(len(x))])


def fd_second_partial(f: Callable[..., float], i: int, j: int, x: Sequence[float],
                      h_outer: float = H_OUTER, h_inner: float = H_NESTED) -> float:
    """Nested central difference: outer step along ``j`` of the inner derivative along ``i``."""
    xp = list(x)
    xm = list(x)
    xp[j] += h_outer
    xm[j] -= h_outer
    inner = FdConfig(h_inner)
    return (fd_partial(f, i, xp, inner) - fd_partial(f, i, xm, inner)) / (2.0 * h_outer)


@functools.lru_cache(maxsize=None)
def jet_kernel(m: int, rows: tuple[int, ...], h_outer: float, h_inner: float,
               active: tuple[bool, ...] | None = None, h_nested: float = H_NESTED):
    """Generate straight-line code for the stencil used by :func:`fd_jet`.

    Gradients use ``h_inner``; second rows nest an inner difference of step
    ``h_nested`` inside an outer one of step ``h_outer``.

    Arguments flagged inactive in ``active`` are known not to influence ``f``;
    their derivative entries are exact zeros and cost no evaluations.
    """
    if active is None:
        active = (True,) * m
    xs = [f"x{j}" for j in range(m)]

    def call(shifts):
        args = list(xs)
        for j, d in shifts:
            args[j] = f"({args[j]} {d})"
        return f"f({', '.join(args)})"

    H, h, hn = repr(h_outer), repr(h_inner), repr(h_nested)
    two_h, two_hn, two_big = repr(2 * h_inner), repr(2 * h_nested), repr(2 * h_outer)
    lines = [f"def kernel(f, {', '.join(xs)}):", f"    val = {call([])}"]
    grads = []
    for j in range(m):
        if not active[j]:
            grads.append("0.0")
            continue
        lines.append(f"    g{j} = ({call([(j, '+ ' + h)])} - {call([(j, '- ' + h)])}) / {two_h}")
        grads.append(f"g{j}")
    rows_out = []
    for i in rows:
        cols = []
        for j in range(m):
            if not (active[i] and active[j]):
                cols.append("0.0")
                continue
            dp = f"({call([(j, '+ ' + H), (i, '+ ' + hn)])} - {call([(j, '+ ' + H), (i, '- ' + hn)])}) / {two_hn}"
            dm = f"({call([(j, '- ' + H), (i, '+ ' + hn)])} - {call([(j, '- ' + H), (i, '- ' + hn)])}) / {two_hn}"
            lines.append(f"    s{i}_{j} = ({dp} - {dm}) / {two_big}")
            cols.append(f"s{i}_{j}")
        rows_out.append("[" + ", ".join(cols) + "]")
    lines.append(f"    return val, [{', '.join(grads)}], [{', '.join(rows_out)}]")
    ns: dict = {}
    exec(compile("\n".join(lines) + "\n", "<fd-jet>", "exec"), ns)
    return ns["kernel"]


def fd_jet(f: Callable[..., float], x: Sequence[float], rows: Sequence[int],
           h_outer: float = H_OUTER, h_inner: float = H_INNER,
           active: Sequence[bool] | None = None, h_nested: float = H_NESTED
           ) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and selected rows of the Hessian of ``f(*x)``.

    ``second[r, j]`` approximates d/dx_j (df/dx_rows[r]) by nested central
    differences: outer step ``h_outer`` along j, inner step ``h_nested``.
    The gradient uses ``h_inner``.
    """
    act = None if active is None else tuple(bool(a) for a in active)
    kernel = jet_kernel(len(x), tuple(rows), float(h_outer), float(h_inner), act, float(h_nested))
    val, grad, second = kernel(f, *[float(v) for v in x])
    return val, np.array(grad), np.array(second).reshape(len(rows), len(x))


def fd_jacobian(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                cfg: FdConfig = FdConfig()) -> np.ndarray:
    """Column-wise central differences of a vector function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += cfg.h
        xm[i] -= cfg.h
        # divide by the step actually taken, which is exact in floating point
        cols.append((np.asarray(g(xp), dtype=float) - np.asarray(g(xm), dtype=float)) / (xp[i] - xm[i]))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def uniform_grid(cfg: OdeConfig) -> np.ndarray:
    """Uniform grid from t0 with step dt; the last step is shortened to land on t1."""
    t0, t1 = cfg.t_span
    n = int(math.floor((t1 - t0) / cfg.dt + 1e-9))
    grid = t0 + cfg.dt * np.arange(n + 1)
    if t1 - grid[-1] > 1e-12 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def rk4_on_grid(rhs: Callable[[float, np.ndarray], np.ndarray], times: np.ndarray,
                y0: np.ndarray) -> np.ndarray:
    """Classical RK4 stepping through an arbitrary increasing grid."""
    y = np.array(y0, dtype=float)
    out = np.empty((len(times), y.size))
    out[0] = y
    for k in range(len(times) - 1):
        t = times[k]
        h = times[k + 1] - t
        try:
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
        except IntegrationError:
            raise
        except Exception as exc:
            raise IntegrationError(float(t), exc) from exc
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def rk4_integrate(rhs: Callable[[float, np.ndarray], np.ndarray], y0: Sequence[float],
                  cfg: OdeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``y' = rhs(t, y)``; returns ``(times, ys)`` with ``ys[k] = y(times[k])``."""
    times = uniform_grid(cfg)
    return times, rk4_on_grid(rhs, times, np.asarray(y0, dtype=float))


def solve_linear(a: np.ndarray, b: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Dense solve that refuses ill-conditioned systems."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros(0)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > cond_limit:
        raise np.linalg.LinAlgError(f"matrix is singular to working precision (cond={cond:.3e})")
    return np.linalg.solve(a, b)


def newton_solve(g: Callable[[np.ndarray], np.ndarray], x0: Sequence[float],
                 cfg: NewtonConfig = NewtonConfig(),
                 jac: Callable[[np.ndarray], np.ndarray] | None = None,
                 min_norm_rcond: float | None = None,
                 stats: dict | None = None) -> np.ndarray:
    """Damped Newton with halving backtracking on the residual max-norm.

    The Jacobian comes from ``fd_jacobian`` unless ``jac`` is given. Returns
    ``x`` with ``max|g(x)| <= cfg.abs_tol``.

    With ``min_norm_rcond`` set, rank-deficient Jacobians are accepted and
    the minimum-norm least-squares step is taken, discarding singular values
    below ``min_norm_rcond`` times the largest one.

    If ``stats`` is a dict it receives ``iterations`` and ``residual``.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    r = np.asarray(g(x), dtype=float).reshape(-1)
    if r.size != x.size:
        raise ValueError(f"residual has {r.size} components for {x.size} unknowns")
    norm = float(np.max(np.abs(r))) if r.size else 0.0
    best_x, best = x.copy(), norm
    for it in range(cfg.max_iter + 1):
        if norm <= cfg.abs_tol:
            if stats is not None:
                stats.update(iterations=it, residual=norm)
            return x
        if it == cfg.max_iter:
            break
        jm = jac(x) if jac is not None else fd_jacobian(g, x, cfg.fd)
        try:
            if min_norm_rcond is None:
                step = solve_linear(jm, -r)
            else:
                if not np.all(np.isfinite(jm)):
                    raise np.linalg.LinAlgError("non-finite Jacobian")
                step = np.linalg.lstsq(jm, -r, rcond=min_norm_rcond)[0]
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(str(exc), best_x, best, it) from exc
        lam = cfg.damping
        while True:
            trial = x + lam * step
            try:
                rt = np.asarray(g(trial), dtype=float).reshape(-1)
                nt = float(np.max(np.abs(rt)))
            except (ArithmeticError, ValueError, RuntimeError):
                rt, nt = None, math.inf
            if nt < norm or lam <= _MIN_DAMPING:
                break
            lam *= 0.5
        if not math.isfinite(nt):
            raise MaxIterationsError("line search left the domain", best_x, best, it + 1)
        x, r, norm = trial, rt, nt
        if norm < best:
            best_x, best = x.copy(), norm
    raise MaxIterationsError("Newton did not converge", best_x, best, cfg.max_iter)
