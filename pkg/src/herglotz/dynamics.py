"""Herglotz equations as an initial value problem, and the multiplier that
turns them into a constrained Euler-Lagrange problem."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .contact import ContactLagrangian, DiscretePath
from .numkit import OdeConfig, rk4_integrate

__all__ = [
    "ContactState",
    "MultiplierCurve",
    "SingularMatrixError",
    "herglotz_rhs",
    "euler_lagrange_rhs",
    "integrate_herglotz",
    "integrate_euler_lagrange",
    "multiplier_evolution",
    "solve_checked",
]

COND_LIMIT = 1e12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ContactState:
    q: np.ndarray
    v: np.ndarray
    z: float

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if q.shape != v.shape or q.ndim != 1:
            raise ValueError("q and v must be vectors of equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "z", float(self.z))


@dataclass(frozen=True)
class MultiplierCurve:
    times: np.ndarray
    lam: np.ndarray


def solve_checked(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Solve ``a x = b``; refuse when the 1-norm condition estimate exceeds 1e12."""
    a = np.asarray(a, dtype=float)
    if a.shape == (1, 1):
        if a[0, 0] == 0.0 or not np.isfinite(a[0, 0]):
            raise SingularMatrixError(f"{what} is singular")
        return np.asarray(b, dtype=float) / a[0, 0]
    if not np.all(np.isfinite(a)):
        raise SingularMatrixError(f"{what} has non-finite entries")
    lu, piv, info = lapack.dgetrf(a)
    if info > 0:
        raise SingularMatrixError(f"{what} is singular")
    rcond, _ = lapack.dgecon(lu, np.abs(a).sum(axis=0).max())
    if not rcond * COND_LIMIT >= 1.0:
        raise SingularMatrixError(f"{what} is singular (condition estimate {1.0 / max(rcond, 1e-300):.3e})")
    x, _ = lapack.dgetrs(lu, piv, b)
    return x


def _solve_small(mass: list[list[float]], rhs: list[float], what: str) -> list[float]:
    """List-in, list-out :func:`solve_checked` for the small systems of the integrators."""
    m = len(rhs)
    if m == 1:
        a = mass[0][0]
        if a == 0.0 or not math.isfinite(a):
            raise SingularMatrixError(f"{what} is singular")
        return [rhs[0] / a]
    col = [sum(abs(row[j]) for row in mass) for j in range(m)]
    if not math.isfinite(sum(col)):
        raise SingularMatrixError(f"{what} has non-finite entries")
    lu, piv, info = lapack.dgetrf(mass)
    if info > 0:
        raise SingularMatrixError(f"{what} is singular")
    rcond, _ = lapack.dgecon(lu, max(col))
    if not rcond * COND_LIMIT >= 1.0:
        raise SingularMatrixError(f"{what} is singular (condition estimate {1.0 / max(rcond, 1e-300):.3e})")
    x, _ = lapack.dgetrs(lu, piv, rhs)
    return x.tolist()


def _accel(L: ContactLagrangian, y: list[float], contact: bool = True):
    """Acceleration and Lagrangian value at the flat state ``y = (q, v, z)``."""
    n = L.n
    val, g, sec = L.raw_jet(y, tuple(range(n, 2 * n)))
    rhs = []
    for i in range(n):
        row = sec[i]
        acc = g[i]
        for j in range(n):
            acc -= row[j] * y[n + j]
        if contact:
            acc = acc - row[2 * n] * val + g[n + i] * g[2 * n]
        rhs.append(acc)
    mass = [sec[i][n:2 * n] for i in range(n)]
    return _solve_small(mass, rhs, "mass matrix"), val


def herglotz_rhs(L: ContactLagrangian, s: ContactState):
    """Explicit form of the Herglotz equations at ``s``.

    Returns ``(dq, dv, dz)`` where ``dv`` solves
    ``M dv = L_q - L_vq v - L_vz L + L_v L_z`` with ``M = L_vv``.
    """
    if s.q.size != L.n:
        raise ValueError(f"state dimension {s.q.size} does not match Lagrangian dimension {L.n}")
    dv, val = _accel(L, [*s.q.tolist(), *s.v.tolist(), s.z])
    return s.v.copy(), np.array(dv), val


def euler_lagrange_rhs(L: ContactLagrangian, s: ContactState):
    """Classical Euler-Lagrange acceleration, ignoring any z coupling."""
    dv, _ = _accel(L, [*s.q.tolist(), *s.v.tolist(), s.z], contact=False)
    return s.v.copy(), np.array(dv)


def integrate_herglotz(L: ContactLagrangian, s0: ContactState, cfg: OdeConfig) -> DiscretePath:
    n = L.n
    if s0.q.size != n:
        raise ValueError(f"state dimension {s0.q.size} does not match Lagrangian dimension {n}")

    def rhs(t, y):
        y = y.tolist()
        dv, val = _accel(L, y)
        return np.array([*y[n:2 * n], *dv, val])

    times, ys = rk4_integrate(rhs, np.concatenate([s0.q, s0.v, [s0.z]]), cfg)
    return DiscretePath(times, ys[:, :n], ys[:, n:2 * n], ys[:, 2 * n])


def integrate_euler_lagrange(L: ContactLagrangian, q0, v0, cfg: OdeConfig) -> DiscretePath:
    """Plain Euler-Lagrange flow of ``L`` with z held at 0; reference for z-free Lagrangians."""
    n = L.n

    def rhs(t, y):
        y = y.tolist()
        dv, _ = _accel(L, [*y, 0.0], contact=False)
        return np.array([*y[n:], *dv])

    times, ys = rk4_integrate(rhs, np.concatenate([np.atleast_1d(q0), np.atleast_1d(v0)]), cfg)
    return DiscretePath(times, ys[:, :n], ys[:, n:])


def _configuration_samples(L: ContactLagrangian, path: DiscretePath):
    """Stack ``(q, v)`` in the Lagrangian's layout, appending multipliers when
    ``L`` is an extended Lagrangian over ``(q, mu)``."""
    if L.n == path.n:
        return path.q, path.v
    if path.mu is not None and L.n == path.n + path.k:
        return (np.hstack([path.q, path.mu]),
                np.hstack([path.v, np.zeros_like(path.mu)]))
    raise ValueError(f"path of dimension {path.n} (k={path.k}) does not fit Lagrangian of dimension {L.n}")


def multiplier_evolution(L: ContactLagrangian, path: DiscretePath) -> MultiplierCurve:
    """Multiplier of the constraint ``z' = L`` along ``path``.

    Integrates ``lam' = -lam * dL/dz`` backward from ``lam(t_N) = 1`` with
    RK4; midpoint stages use linearly interpolated states.
    """
    if path.z is None:
        raise ValueError("path must carry z values")
    q, v = _configuration_samples(L, path)
    f = L.fn
    h = 1e-6
    l_z = np.empty(path.times.size)
    mids = np.empty(path.times.size - 1)

    def dz(args):
        return (f(*args[:-1], args[-1] + h) - f(*args[:-1], args[-1] - h)) / (2 * h)

    rows = np.hstack([q, v, path.z[:, None]])
    for k, row in enumerate(rows.tolist()):
        l_z[k] = dz(row)
    for k, row in enumerate((0.5 * (rows[:-1] + rows[1:])).tolist()):
        mids[k] = dz(row)

    # backward in time: s = t_N - t, d lam/ds = lam * L_z
    rev_t = path.times[-1] - path.times[::-1]
    nodes = l_z[::-1]
    rev_mids = mids[::-1]
    lam = np.empty(path.times.size)
    lam[0] = 1.0
    cur = 1.0
    for k in range(rev_t.size - 1):
        hs = rev_t[k + 1] - rev_t[k]
        a, m, b = nodes[k], rev_mids[k], nodes[k + 1]
        k1 = cur * a
        k2 = (cur + 0.5 * hs * k1) * m
        k3 = (cur + 0.5 * hs * k2) * m
        k4 = (cur + hs * k3) * b
        cur = cur + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        lam[k + 1] = cur
    return MultiplierCurve(path.times, lam[::-1].copy())
