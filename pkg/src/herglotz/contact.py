"""Contact Lagrangians, discrete paths, the action operator and the contact
action functional."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr, parse
from .numkit import H_INNER, H_NESTED, H_OUTER, IntegrationError, fd_jet, jet_kernel

__all__ = [
    "ContactLagrangian",
    "DiscretePath",
    "Variation",
    "default_names",
    "action_z",
    "contact_action",
    "herglotz_action",
    "first_variation",
    "perturb",
    "random_variation",
]


def default_names(n: int, prefix: str) -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(n))


@dataclass(frozen=True)
class ContactLagrangian:
    """``L(q, v, z)`` written as an expression.

    ``coords`` and ``velocities`` name the configuration and velocity
    variables (``q1..qn`` and ``v1..vn`` by default); ``params`` binds any
    remaining names to constants.
    """

    expr: Expr
    coords: tuple[str, ...]
    velocities: tuple[str, ...]
    z: str = "z"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.coords) != len(self.velocities):
            raise ValueError("coords and velocities must have the same length")
        names = list(self.coords) + list(self.velocities) + [self.z]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        clash = set(names) & set(self.params)
        if clash:
            raise ValueError(f"parameters shadow state variables: {sorted(clash)}")
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "_fn", self.expr.compile(names, self.params))
        used = self.expr.variables()
        object.__setattr__(self, "_active", tuple(a in used for a in names))

    @classmethod
    def from_string(cls, source: str, n: int, params: Mapping[str, float] | None = None,
                    coords: Sequence[str] | None = None,
                    velocities: Sequence[str] | None = None, z: str = "z"):
        params = dict(params or {})
        coords = tuple(coords) if coords is not None else default_names(n, "q")
        velocities = tuple(velocities) if velocities is not None else default_names(n, "v")
        allowed = list(coords) + list(velocities) + [z] + list(params)
        return cls(parse(source, allowed), coords, velocities, z, params)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def active(self) -> tuple[bool, ...]:
        """Which of ``(q, v, z)`` actually occur in the expression."""
        return self._active

    @property
    def fn(self):
        """Compiled positional callable ``f(q1..qn, v1..vn, z)``."""
        return self._fn

    def __call__(self, q, v, z) -> float:
        return self._fn(*q, *v, z)

    def depends_on(self, name: str) -> bool:
        return name in self.expr.variables()

    def raw_jet(self, x: Sequence[float], rows: tuple[int, ...]):
        """List-based :meth:`jet` over a flat argument list ``(q, v, z)``."""
        return jet_kernel(len(x), rows, H_OUTER, H_INNER, self._active)(self._fn, *x)

    def jet(self, q, v, z, rows: Sequence[int] | None = None,
            h_outer: float = H_OUTER, h_inner: float = H_INNER, h_nested: float = H_NESTED):
        """Value, gradient over ``(q, v, z)`` and second-derivative rows.

        ``rows`` index into the flat argument vector ``(q, v, z)``; the
        default is the velocity block, which is what the dynamics need.
        """
        n = self.n
        if rows is None:
            rows = range(n, 2 * n)
        x = [*q, *v, z]
        return fd_jet(self._fn, x, list(rows), h_outer, h_inner, self._active, h_nested)


@dataclass(frozen=True)
class DiscretePath:
    """Sampled curve: grid, positions, velocities and optional action,
    multipliers and controls."""

    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    z: np.ndarray | None = None
    mu: np.ndarray | None = None
    u: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be a strictly increasing grid with at least two points")
        object.__setattr__(self, "times", t)
        for name in ("q", "v", "mu", "u"):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.shape[0] != t.size:
                raise ValueError(f"{name} has {a.shape[0]} rows for {t.size} grid points")
            object.__setattr__(self, name, a)
        if self.q.shape != self.v.shape:
            raise ValueError("q and v must have the same shape")
        if self.z is not None:
            z = np.asarray(self.z, dtype=float).reshape(-1)
            if z.size != t.size:
                raise ValueError(f"z has {z.size} entries for {t.size} grid points")
            object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def k(self) -> int:
        return 0 if self.mu is None else self.mu.shape[1]

    def with_z(self, z: np.ndarray) -> "DiscretePath":
        return DiscretePath(self.times, self.q, self.v, z, self.mu, self.u)

    @classmethod
    def from_positions(cls, times, q, **extra) -> "DiscretePath":
        """Path whose velocities are induced from ``q`` by finite differences."""
        times = np.asarray(times, dtype=float)
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        return cls(times, q, induced_velocity(times, q), **extra)


def induced_velocity(times: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Centered differences inside the grid, one-sided (second order) at the ends."""
    return np.gradient(q, times, axis=0, edge_order=2)


@dataclass(frozen=True)
class Variation:
    """Endpoint-vanishing displacement field along a path."""

    dq: np.ndarray

    def __post_init__(self):
        dq = np.asarray(self.dq, dtype=float)
        if dq.ndim == 1:
            dq = dq[:, None]
        if np.any(dq[0] != 0) or np.any(dq[-1] != 0):
            raise ValueError("variation must vanish at both endpoints")
        object.__setattr__(self, "dq", dq)

    def __mul__(self, a: float) -> "Variation":
        return Variation(a * self.dq)

    __rmul__ = __mul__


def random_variation(times: np.ndarray, n: int, rng: np.random.Generator,
                     modes: int = 4) -> Variation:
    """Smooth random variation: a short sine series, scaled to max-norm 1."""
    times = np.asarray(times, dtype=float)
    s = (times - times[0]) / (times[-1] - times[0])
    dq = np.zeros((times.size, n))
    for i in range(n):
        for k in range(1, modes + 1):
            dq[:, i] += rng.normal() * np.sin(k * np.pi * s) / k
    dq[0] = 0.0
    dq[-1] = 0.0
    peak = np.max(np.abs(dq))
    if peak > 0:
        dq /= peak
    return Variation(dq)


def action_z(L: ContactLagrangian, path: DiscretePath, z0: float) -> DiscretePath:
    """Solve ``z' = L(q, v, z)``, ``z(t0) = z0`` along ``path``.

    One RK4 step per grid interval; the midpoint stages see ``(q, v)``
    linearly interpolated between the two nodes.
    """
    if path.n != L.n:
        raise ValueError(f"path has dimension {path.n}, Lagrangian expects {L.n}")
    f = L.fn
    qv = np.hstack([path.q, path.v])
    nodes = [tuple(row) for row in qv.tolist()]
    mids = [tuple(row) for row in (0.5 * (qv[:-1] + qv[1:])).tolist()]
    times = path.times.tolist()
    z = np.empty(len(times))
    zk = float(z0)
    z[0] = zk
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        a, m, b = nodes[k], mids[k], nodes[k + 1]
        try:
            k1 = f(*a, zk)
            k2 = f(*m, zk + 0.5 * h * k1)
            k3 = f(*m, zk + 0.5 * h * k2)
            k4 = f(*b, zk + h * k3)
        except Exception as exc:
            raise IntegrationError(times[k], exc) from exc
        zk = zk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        z[k + 1] = zk
    return path.with_z(z)


def path_interpolant(path: DiscretePath):
    """``(q, v)`` at any time by linear interpolation between grid nodes."""
    times = path.times.tolist()
    qv = np.hstack([path.q, path.v])

    def at(t: float) -> np.ndarray:
        k = min(max(bisect.bisect_right(times, t) - 1, 0), len(times) - 2)
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * qv[k] + w * qv[k + 1]

    return at


def herglotz_action(L: ContactLagrangian, path: DiscretePath, z0: float) -> float:
    """The conventional Herglotz action: the terminal value of z."""
    return float(action_z(L, path, z0).z[-1])


def contact_action(L: ContactLagrangian, path: DiscretePath, z0: float) -> float:
    """Increment of the action along the path, ``z(t_N) - z(t_0)``."""
    return herglotz_action(L, path, z0) - float(z0)


def perturb(path: DiscretePath, dq: np.ndarray) -> DiscretePath:
    """Displace positions by ``dq`` and re-derive velocities from the new positions."""
    return DiscretePath.from_positions(path.times, path.q + dq)


def first_variation(L: ContactLagrangian, path: DiscretePath, z0: float,
                    direction: Variation, eps: float = 1e-5) -> float:
    """Central-difference directional derivative of the contact action."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    dq = direction.dq
    if dq.shape != path.q.shape:
        raise ValueError(f"variation shape {dq.shape} does not match path {path.q.shape}")
    if not np.any(dq):
        return 0.0
    plus = contact_action(L, perturb(path, eps * dq), z0)
    minus = contact_action(L, perturb(path, -eps * dq), z0)
    return (plus - minus) / (2.0 * eps)
