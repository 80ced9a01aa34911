import math

import numpy as np
import pytest

from herglotz.contact import ContactLagrangian, DiscretePath, action_z
from herglotz.dynamics import (ContactState, SingularMatrixError, euler_lagrange_rhs, herglotz_rhs,
                               integrate_euler_lagrange, integrate_herglotz, multiplier_evolution,
                               solve_checked)
from herglotz.numkit import IntegrationError, OdeConfig

DAMPED = "v1^2/2 - w^2*q1^2/2 - g*z"


def damped(w=1.0, g=0.1):
    return ContactLagrangian.from_string(DAMPED, 1, {"w": w, "g": g})


def test_rhs_linear_friction():
    L = ContactLagrangian.from_string("v1^2/2 - g*z", 1, {"g": 0.5})
    dq, dv, dz = herglotz_rhs(L, ContactState([0.0], [1.0], 0.0))
    assert dq[0] == 1.0
    assert dv[0] == pytest.approx(-0.5, abs=1e-8)
    assert dz == pytest.approx(0.5)


def test_rhs_z_free_is_euler_lagrange():
    L = ContactLagrangian.from_string("v1^2/2 - q1^2/2", 1)
    _, dv, _ = herglotz_rhs(L, ContactState([0.7], [0.2], 3.0))
    assert dv[0] == pytest.approx(-0.7, abs=1e-8)
    _, dv_el = euler_lagrange_rhs(L, ContactState([0.7], [0.2], 3.0))
    assert dv_el[0] == dv[0]


@pytest.mark.parametrize("q,v,z", [(0.3, -1.1, 0.4), (-2.0, 0.5, -1.0)])
def test_rhs_damped_oscillator(q, v, z):
    w, g = 1.7, 0.3
    _, dv, dz = herglotz_rhs(damped(w, g), ContactState([q], [v], z))
    assert dv[0] == pytest.approx(-w * w * q - g * v, abs=1e-7)
    assert dz == pytest.approx(v * v / 2 - w * w * q * q / 2 - g * z)


def test_rhs_two_dimensional_coupling():
    # L = (v1^2 + 2 v2^2)/2 + v1 q2 - z q1: hand-expanded Herglotz equations
    L = ContactLagrangian.from_string("(v1^2 + 2*v2^2)/2 + v1*q2 - z*q1", 2)
    q, v, z = np.array([0.4, -0.3]), np.array([1.2, 0.5]), 0.8
    Lval = L(q, v, z)
    Lz = -q[0]
    a1 = (-z) - v[1] + (v[0] + q[1]) * Lz       # d/dt(v1 + q2) = L_q1 + L_v1 L_z
    a2 = (v[0] + 2 * v[1] * Lz) / 2             # 2 a2 = L_q2 + L_v2 L_z
    _, dv, dz = herglotz_rhs(L, ContactState(q, v, z))
    assert dv == pytest.approx([a1, a2], abs=1e-7)
    assert dz == pytest.approx(Lval)


def test_singular_mass_matrix():
    L = ContactLagrangian.from_string("v1 - q1^2", 1)
    with pytest.raises(SingularMatrixError):
        herglotz_rhs(L, ContactState([0.0], [1.0], 0.0))
    L2 = ContactLagrangian.from_string("(v1 + v2)^2/2", 2)
    with pytest.raises(SingularMatrixError):
        herglotz_rhs(L2, ContactState([0.0, 0.0], [1.0, 0.0], 0.0))


def test_solve_checked_rejects_ill_conditioned():
    with pytest.raises(SingularMatrixError):
        solve_checked(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]]), np.ones(2), "m")
    assert solve_checked(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([2.0, 2.0]), "m") == pytest.approx([1.0, 0.5])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        herglotz_rhs(damped(), ContactState([0.0, 1.0], [0.0, 0.0], 0.0))


def test_free_particle():
    L = ContactLagrangian.from_string("v1^2/2", 1)
    path = integrate_herglotz(L, ContactState([0.0], [1.0], 0.0), OdeConfig(1e-2))
    assert np.allclose(path.q[:, 0], path.times, atol=1e-12)
    assert np.allclose(path.z, path.times / 2, atol=1e-12)


def _underdamped(t, w, g, q0=1.0, v0=0.0):
    wd = math.sqrt(w * w - g * g / 4)
    a = q0
    b = (v0 + g / 2 * q0) / wd
    return np.exp(-g * t / 2) * (a * np.cos(wd * t) + b * np.sin(wd * t))


def test_damped_oscillator_matches_closed_form():
    path = integrate_herglotz(damped(), ContactState([1.0], [0.0], 0.0), OdeConfig(1e-3, (0.0, 3.0)))
    assert np.max(np.abs(path.q[:, 0] - _underdamped(path.times, 1.0, 0.1))) <= 1e-6


def test_action_operator_reproduces_z():
    # action_z sees (q, v) linearly interpolated at the RK midpoints, an O(dt^2) effect
    L = damped()
    errs = []
    for dt in (1e-3, 5e-4):
        path = integrate_herglotz(L, ContactState([1.0], [0.0], 0.0), OdeConfig(dt, (0.0, 3.0)))
        errs.append(np.max(np.abs(action_z(L, path, 0.0).z - path.z)))
    assert errs[1] <= 1e-8
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_z_rate_and_dissipation():
    w, g = 1.0, 0.1
    L = damped(w, g)
    path = integrate_herglotz(L, ContactState([1.0], [0.0], 0.0), OdeConfig(1e-3, (0.0, 5.0)))
    t, q, v, z = path.times, path.q[:, 0], path.v[:, 0], path.z
    h = t[1] - t[0]
    inner = slice(2, -2)

    def d5(y):
        # fourth-order central difference on the interior
        return (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)

    lv = np.array([L([a], [b], c) for a, b, c in zip(q, v, z)])
    assert np.max(np.abs(d5(z) - lv[inner])) <= 1e-6
    energy = 0.5 * v ** 2 + 0.5 * w * w * q ** 2
    assert np.max(np.abs(d5(energy) + g * v[inner] ** 2)) <= 1e-6


def test_reduction_to_euler_lagrange():
    L = damped(g=0.0)
    cfg = OdeConfig(1e-3, (0.0, 2.0))
    a = integrate_herglotz(L, ContactState([1.0], [0.0], 0.0), cfg)
    b = integrate_euler_lagrange(L, [1.0], [0.0], cfg)
    assert np.max(np.abs(a.q - b.q)) <= 1e-10
    assert np.max(np.abs(a.v - b.v)) <= 1e-10


def test_domain_error_reports_time():
    L = ContactLagrangian.from_string("v1^2/2 - log(1 - q1)", 1)
    with pytest.raises(IntegrationError) as info:
        integrate_herglotz(L, ContactState([0.0], [2.0], 0.0), OdeConfig(1e-2, (0.0, 2.0)))
    assert 0.0 < info.value.t < 1.0


def test_multiplier_constant_rate():
    L = ContactLagrangian.from_string("v1^2/2 - g*z", 1, {"g": 0.5})
    path = integrate_herglotz(L, ContactState([0.0], [1.0], 0.0), OdeConfig(1e-3))
    lam = multiplier_evolution(L, path).lam
    assert lam[-1] == 1.0
    assert lam[0] == pytest.approx(math.exp(-0.5), abs=1e-8)
    assert np.max(np.abs(lam - np.exp(0.5 * (path.times - 1.0)))) <= 1e-8


def test_multiplier_z_free_is_one():
    L = ContactLagrangian.from_string("v1^2/2 - q1^2/2", 1)
    path = integrate_herglotz(L, ContactState([1.0], [0.0], 0.0), OdeConfig(1e-2))
    assert np.all(multiplier_evolution(L, path).lam == 1.0)


def test_multiplier_variable_rate_positive():
    # L_z = -q1^2 varies along the path; compare with quadrature of the exponent
    L = ContactLagrangian.from_string("v1^2/2 - q1^2*z", 1)
    path = integrate_herglotz(L, ContactState([1.0], [0.5], 0.2), OdeConfig(1e-3))
    lam = multiplier_evolution(L, path).lam
    assert lam[-1] == 1.0 and np.all(lam > 0)
    rate = -path.q[:, 0] ** 2
    # lam(t) = exp(int_t^1 L_z)
    tail = np.concatenate([np.cumsum((0.5 * (rate[1:] + rate[:-1]) * np.diff(path.times))[::-1])[::-1], [0.0]])
    assert np.max(np.abs(lam - np.exp(tail))) <= 1e-6


def test_multiplier_needs_z():
    L = damped()
    path = DiscretePath(np.linspace(0, 1, 11), np.zeros(11), np.zeros(11))
    with pytest.raises(ValueError):
        multiplier_evolution(L, path)
