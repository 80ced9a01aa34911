"""Vakonomic Herglotz dynamics: a contact Lagrangian restricted to paths
satisfying velocity constraints ``psi(q, v, z) = 0``.

The equations are the Herglotz equations of ``L - mu . psi`` plus the
constraints. They form a DAE; it is integrated after differentiating each
constraint once, and the drift of ``psi`` is measured afterwards.

Coordinates whose velocity appears neither in ``L`` nor in any constraint
(controls, after the optimal control reduction) are *algebraic*: their
equation is ``d(L - mu . psi)/dq_a = 0``, which is differentiated once as
well, so their rate of change is part of the same linear solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import dynamics
from .contact import ContactLagrangian, DiscretePath, default_names
from .expr import Binary, Expr, Var, parse
from .numkit import (NewtonConfig, NewtonError, OdeConfig, newton_solve,
                     rk4_integrate)

__all__ = [
    "VakonomicProblem",
    "ExtendedState",
    "NameCollisionError",
    "InconsistentStateError",
    "AbnormalExtremalError",
    "extended_lagrangian",
    "vakonomic_rhs",
    "integrate_vakonomic",
    "solve_vakonomic_bvp",
    "solve_vakonomic_bvp_all",
    "constraint_residuals",
]

log = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-10
ABNORMAL_MU = 1e8
# integrable constraints leave multipliers undetermined; finite-difference
# noise in the shooting Jacobian sits around 1e-7 relative
SHOOTING_RCOND = 1e-6


class NameCollisionError(ValueError):
    pass


class InconsistentStateError(ValueError):
    pass


class AbnormalExtremalError(RuntimeError):
    """Multipliers blew up: the extremal is (close to) abnormal."""


@dataclass(frozen=True)
class VakonomicProblem:
    """Contact Lagrangian, velocity constraints and boundary data.

    For algebraic coordinates the entries of ``q0`` are only a starting
    guess and the entries of ``q1`` are ignored.
    """

    L: ContactLagrangian
    constraints: tuple[Expr, ...]
    q0: np.ndarray
    q1: np.ndarray
    z0: float = 0.0
    t_span: tuple[float, float] = (0.0, 1.0)
    mu_names: tuple[str, ...] = ()

    def __post_init__(self):
        L = self.L
        k = len(self.constraints)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "q0", np.atleast_1d(np.asarray(self.q0, dtype=float)))
        object.__setattr__(self, "q1", np.atleast_1d(np.asarray(self.q1, dtype=float)))
        if self.q0.shape != (L.n,) or self.q1.shape != (L.n,):
            raise ValueError(f"boundary points must have {L.n} components")
        mu_names = tuple(self.mu_names) or default_names(k, "mu")
        if len(mu_names) != k:
            raise ValueError("one multiplier name per constraint")
        object.__setattr__(self, "mu_names", mu_names)
        taken = set(L.coords) | set(L.velocities) | {L.z} | set(L.params)
        clash = taken & (set(mu_names) | {f"v{m}" for m in mu_names})
        if clash:
            raise NameCollisionError(f"multiplier names collide with problem variables: {sorted(clash)}")
        names = [*L.coords, *L.velocities, L.z]
        psi = []
        for c in self.constraints:
            unknown = c.variables() - set(names) - set(L.params)
            if unknown:
                raise ValueError(f"constraint {c} uses undeclared variables {sorted(unknown)}")
            psi.append(ContactLagrangian(c, L.coords, L.velocities, L.z, L.params))
        object.__setattr__(self, "_psi", tuple(psi))
        used = set(L.expr.variables())
        for c in self.constraints:
            used |= c.variables()
        algebraic = tuple(i for i, v in enumerate(L.velocities) if v not in used)
        dynamic = tuple(i for i in range(L.n) if i not in algebraic)
        object.__setattr__(self, "algebraic", algebraic)
        object.__setattr__(self, "dynamic", dynamic)

    @classmethod
    def from_strings(cls, lagrangian: str, constraints: Sequence[str], n: int,
                     q0, q1, z0: float = 0.0, t_span=(0.0, 1.0),
                     params: Mapping[str, float] | None = None):
        L = ContactLagrangian.from_string(lagrangian, n, params)
        allowed = [*L.coords, *L.velocities, L.z, *L.params]
        return cls(L, tuple(parse(c, allowed) for c in constraints), q0, q1, z0, t_span)

    @property
    def n(self) -> int:
        return self.L.n

    @property
    def k(self) -> int:
        return len(self.constraints)

    @property
    def psi(self) -> tuple[ContactLagrangian, ...]:
        return self._psi

    def psi_values(self, q, v, z) -> np.ndarray:
        return np.array([c(q, v, z) for c in self._psi])


@dataclass(frozen=True)
class ExtendedState:
    q: np.ndarray
    v: np.ndarray
    z: float
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "z", float(self.z))


def extended_lagrangian(p: VakonomicProblem) -> ContactLagrangian:
    """``L - sum_a mu_a psi_a`` over configuration ``(q, mu)``.

    The multiplier velocities are declared but never occur.
    """
    L = p.L
    if p.k == 0:
        return L
    e: Expr = L.expr
    for name, c in zip(p.mu_names, p.constraints):
        e = Binary("-", e, Binary("*", Var(name), c))
    return ContactLagrangian(e, (*L.coords, *p.mu_names),
                             (*L.velocities, *(f"v{m}" for m in p.mu_names)), L.z, L.params)


def _rates(p: VakonomicProblem, q: list, v: list, z: float, mu: list):
    """Solve for ``(dv_dynamic, dmu, dq_algebraic)`` and the value of ``L - mu.psi``.

    ``v`` entries for algebraic coordinates are ignored.
    """
    n, k = p.n, p.k
    D, A = p.dynamic, p.algebraic
    if k == 0 and not A:
        dv, val = dynamics._accel(p.L, [*q, *v, z])
        return dv, [], [], val
    x = [*q, *v, z]
    for i in A:
        x[n + i] = 0.0
    rows = tuple(n + i for i in D) + tuple(A)
    val, g, s = p.L.raw_jet(x, rows)
    g = list(g)
    s = [list(r) for r in s]
    pg = []
    for a, c in enumerate(p.psi):
        cv, cg, cs = c.raw_jet(x, rows)
        pg.append(cg)
        val -= mu[a] * cv
        for j in range(len(g)):
            g[j] -= mu[a] * cg[j]
        for r in range(len(rows)):
            for j in range(len(g)):
                s[r][j] -= mu[a] * cs[r][j]
    zi = 2 * n
    nd, na = len(D), len(A)
    size = nd + k + na
    M = [[0.0] * size for _ in range(size)]
    b = [0.0] * size
    # Herglotz rows for the dynamic coordinates
    for r, i in enumerate(D):
        row = s[r]
        for c, j in enumerate(D):
            M[r][c] = row[n + j]
        for a in range(k):
            M[r][nd + a] = -pg[a][n + i]
        for c, j in enumerate(A):
            M[r][nd + k + c] = row[j]
        acc = g[i]
        for j in D:
            acc -= row[j] * v[j]
        b[r] = acc - row[zi] * val + g[n + i] * g[zi]
    # differentiated constraints
    for a in range(k):
        r = nd + a
        cg = pg[a]
        for c, j in enumerate(D):
            M[r][c] = cg[n + j]
        for c, j in enumerate(A):
            M[r][nd + k + c] = cg[j]
        acc = 0.0
        for j in D:
            acc -= cg[j] * v[j]
        b[r] = acc - cg[zi] * val
    # differentiated stationarity of the algebraic coordinates
    for ra, i in enumerate(A):
        r = nd + k + ra
        row = s[nd + ra]
        for c, j in enumerate(D):
            M[r][c] = row[n + j]
        for a in range(k):
            M[r][nd + a] = -pg[a][i]
        for c, j in enumerate(A):
            M[r][nd + k + c] = row[j]
        acc = 0.0
        for j in D:
            acc -= row[j] * v[j]
        b[r] = acc - row[zi] * val
    sol = dynamics._solve_small(M, b, "bordered constraint matrix")
    return sol[:nd], sol[nd:nd + k], sol[nd + k:], val


def vakonomic_rhs(p: VakonomicProblem, s: ExtendedState):
    """Return ``(dq, dv, dz, dmu)`` at ``s``.

    For algebraic coordinates ``dq`` holds their rate of change and ``dv``
    is zero; they carry no velocity state of their own.
    """
    n = p.n
    if s.q.size != n or s.v.size != n or s.mu.size != p.k:
        raise ValueError("state dimensions do not match the problem")
    dvd, dmu, dqa, val = _rates(p, s.q.tolist(), s.v.tolist(), s.z, s.mu.tolist())
    dq = s.v.copy()
    dv = np.zeros(n)
    for c, i in enumerate(p.dynamic):
        dv[i] = dvd[c]
    for c, i in enumerate(p.algebraic):
        dq[i] = dqa[c]
    return dq, dv, val, np.array(dmu)


def stationarity_residuals(p: VakonomicProblem, q, mu, z, v) -> np.ndarray:
    """``d(L - mu.psi)/dq`` for the algebraic coordinates."""
    if not p.algebraic:
        return np.zeros(0)
    n = p.n
    x = [*np.asarray(q, float).tolist(), *np.asarray(v, float).tolist(), float(z)]
    for i in p.algebraic:
        x[n + i] = 0.0
    _, g, _ = p.L.raw_jet(x, ())
    out = np.array([g[i] for i in p.algebraic], dtype=float)
    for a, c in enumerate(p.psi):
        _, cg, _ = c.raw_jet(x, ())
        out -= mu[a] * np.array([cg[i] for i in p.algebraic])
    return out


def _pack(p: VakonomicProblem, s: ExtendedState) -> np.ndarray:
    return np.concatenate([s.q, s.v[list(p.dynamic)], [s.z], s.mu])


def integrate_vakonomic(p: VakonomicProblem, s0: ExtendedState, cfg: OdeConfig,
                        check_consistency: bool = True) -> DiscretePath:
    """Integrate the index-reduced vakonomic equations from a consistent state.

    Velocities of algebraic coordinates in the returned path are their
    computed rates of change.
    """
    n, k = p.n, p.k
    D, A = list(p.dynamic), list(p.algebraic)
    nd = len(D)
    if s0.q.size != n or s0.v.size != n or s0.mu.size != k:
        raise ValueError("initial state dimensions do not match the problem")
    if check_consistency:
        res = np.concatenate([p.psi_values(s0.q, s0.v, s0.z),
                              stationarity_residuals(p, s0.q, s0.mu, s0.z, s0.v)])
        if res.size and np.max(np.abs(res)) > CONSISTENCY_TOL:
            raise InconsistentStateError(
                f"initial state violates the constraints (max residual {np.max(np.abs(res)):.3e})")

    def unpack(y):
        y = y.tolist()
        q = y[:n]
        v = [0.0] * n
        for c, i in enumerate(D):
            v[i] = y[n + c]
        return q, v, y[n + nd], y[n + nd + 1:]

    def rhs(t, y):
        q, v, z, mu = unpack(y)
        dvd, dmu, dqa, val = _rates(p, q, v, z, mu)
        dq = list(v)
        for c, i in enumerate(A):
            dq[i] = dqa[c]
        return np.array([*dq, *dvd, val, *dmu])

    times, ys = rk4_integrate(rhs, _pack(p, s0), cfg)
    q = ys[:, :n]
    v = np.zeros((times.size, n))
    v[:, D] = ys[:, n:n + nd]
    z = ys[:, n + nd]
    mu = ys[:, n + nd + 1:]
    if A:
        for r in range(times.size):
            _, _, dqa, _ = _rates(p, q[r].tolist(), v[r].tolist(), z[r], mu[r].tolist())
            v[r, A] = dqa
    path = DiscretePath(times, q, v, z, mu if k else None)
    if k:
        drift = np.max(np.abs(constraint_residuals(p, path)))
        log.debug("vakonomic integration: max constraint drift %.3e", drift)
    return path


def constraint_residuals(p: VakonomicProblem, path: DiscretePath) -> np.ndarray:
    """``psi`` evaluated along the path, shape ``(N+1, k)``."""
    return np.array([p.psi_values(path.q[r], path.v[r], path.z[r])
                     for r in range(path.times.size)]).reshape(path.times.size, p.k)


def solve_vakonomic_bvp(p: VakonomicProblem, v0_guess=None, mu0_guess=None,
                        cfg: OdeConfig | None = None,
                        newton: NewtonConfig = NewtonConfig(),
                        stats: dict | None = None) -> DiscretePath:
    """Single shooting on the initial velocity and multipliers.

    Unknowns: velocities of the dynamic coordinates, the multipliers, and
    the initial values of algebraic coordinates. Residuals: endpoint error
    of the dynamic coordinates, the constraints at t0, and stationarity of
    the algebraic coordinates at t0.

    When the constraints are integrable the multipliers do not affect the
    motion; Newton then takes minimum-norm steps and leaves them at the guess.
    """
    n, k = p.n, p.k
    D, A = list(p.dynamic), list(p.algebraic)
    nd, na = len(D), len(A)
    if cfg is None:
        cfg = OdeConfig(1e-3, p.t_span)
    v0 = np.zeros(n) if v0_guess is None else np.atleast_1d(np.asarray(v0_guess, float))
    mu0 = np.zeros(k) if mu0_guess is None else np.atleast_1d(np.asarray(mu0_guess, float))
    if v0.shape != (n,) or mu0.shape != (k,):
        raise ValueError(f"guess must provide {n} velocities and {k} multipliers")

    def state(w):
        q = p.q0.copy()
        q[A] = w[nd + k:]
        v = np.zeros(n)
        v[D] = w[:nd]
        return ExtendedState(q, v, p.z0, w[nd:nd + k])

    def residual(w):
        if k and np.max(np.abs(w[nd:nd + k])) > ABNORMAL_MU:
            raise AbnormalExtremalError("multiplier norm exceeded 1e8 during shooting")
        s = state(w)
        path = integrate_vakonomic(p, s, cfg, check_consistency=False)
        end = path.q[-1, D] - p.q1[D]
        return np.concatenate([end, p.psi_values(s.q, s.v, s.z),
                               stationarity_residuals(p, s.q, s.mu, s.z, s.v)])

    w0 = np.concatenate([v0[D], mu0, p.q0[A]])
    assert w0.size == nd + k + na
    w = newton_solve(residual, w0, newton, min_norm_rcond=SHOOTING_RCOND, stats=stats)
    path = integrate_vakonomic(p, state(w), cfg, check_consistency=False)
    if k and np.max(np.abs(path.mu)) > ABNORMAL_MU:
        raise AbnormalExtremalError("multipliers exceed 1e8 along the solution")
    return path


def solve_vakonomic_bvp_all(p: VakonomicProblem, guesses: Sequence[tuple],
                            cfg: OdeConfig | None = None,
                            newton: NewtonConfig = NewtonConfig(),
                            distinct_tol: float = 1e-6) -> list[DiscretePath]:
    """Run :func:`solve_vakonomic_bvp` from each ``(v0, mu0)`` guess and
    return the distinct solutions found."""
    found: list[DiscretePath] = []
    for v0, mu0 in guesses:
        try:
            path = solve_vakonomic_bvp(p, v0, mu0, cfg, newton)
        except (NewtonError, AbnormalExtremalError) as exc:
            log.info("guess v0=%s mu0=%s failed: %s", v0, mu0, exc)
            continue
        if all(np.max(np.abs(path.q - other.q)) > distinct_tol for other in found):
            found.append(path)
    return found
