import math

import numpy as np
import pytest

from herglotz.contact import ContactLagrangian, DiscretePath
from herglotz.dynamics import ContactState, herglotz_rhs, integrate_herglotz, multiplier_evolution
from herglotz.numkit import OdeConfig
from herglotz.vakonomic import (ExtendedState, InconsistentStateError, NameCollisionError, VakonomicProblem,
                                constraint_residuals, extended_lagrangian, integrate_vakonomic,
                                solve_vakonomic_bvp, solve_vakonomic_bvp_all, vakonomic_rhs)

DAMPED = "v1^2/2 - w^2*q1^2/2 - g*z"
PARAMS = {"w": 1.0, "g": 0.1}


def classical(q1=(1.0, 0.5)):
    return VakonomicProblem.from_strings("(v1^2 + v2^2)/2", ["v2 - q1*v1"], 2, [0.0, 0.0], q1)


def unconstrained(q0=0.0, q1=1.0):
    return VakonomicProblem.from_strings(DAMPED, [], 1, [q0], [q1], params=PARAMS)


def d5(y, h):
    # fourth-order central difference on the interior
    return (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)


def test_extended_lagrangian_without_constraints_is_l():
    p = unconstrained()
    assert extended_lagrangian(p) is p.L


def test_extended_lagrangian_substitution():
    Lmu = extended_lagrangian(classical())
    assert Lmu.coords == ("q1", "q2", "mu1")
    assert not any(Lmu.depends_on(v) for v in Lmu.velocities[2:])
    rng = np.random.default_rng(0)
    for _ in range(10):
        q1, q2, mu, v1, v2, z = rng.normal(size=6)
        want = v1 ** 2 / 2 + v2 ** 2 / 2 - mu * (v2 - q1 * v1)
        assert Lmu([q1, q2, mu], [v1, v2, 0.0], z) == pytest.approx(want, abs=1e-13)


def test_extended_lagrangian_mu_derivative_is_minus_psi():
    p = VakonomicProblem.from_strings("(v1^2 + v2^2)/2 - z*q2", ["v2 - q1*v1 - 0.1*z", "v1*q2 + sin(q1)"], 2,
                                      [0.0, 0.0], [1.0, 1.0])
    Lmu = extended_lagrangian(p)
    rng = np.random.default_rng(1)
    for _ in range(5):
        q, v, mu, z = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2), float(rng.normal())
        _, grad, _ = Lmu.jet([*q, *mu], [*v, 0.0, 0.0], z, rows=())
        assert grad[2:4] == pytest.approx(-p.psi_values(q, v, z), abs=1e-8)


def test_name_collision():
    with pytest.raises(NameCollisionError):
        VakonomicProblem.from_strings("v1^2/2 + mu1", ["v1 - q1"], 1, [0.0], [1.0], params={"mu1": 2.0})


def test_undeclared_constraint_variable():
    L = ContactLagrangian.from_string("v1^2/2", 1)
    from herglotz.expr import parse
    with pytest.raises(ValueError):
        VakonomicProblem(L, (parse("v1 - w", ["v1", "w"]),), [0.0], [1.0])


def test_k0_rhs_matches_herglotz_exactly():
    p = unconstrained()
    rng = np.random.default_rng(2)
    for _ in range(10):
        q, v, z = rng.normal(size=3)
        dq, dv, dz, dmu = vakonomic_rhs(p, ExtendedState([q], [v], z))
        hq, hv, hz = herglotz_rhs(p.L, ContactState([q], [v], z))
        assert dmu.size == 0
        assert abs(dv[0] - hv[0]) <= 1e-12 and abs(dz - hz) <= 1e-12 and dq[0] == hq[0]


def test_k0_integration_matches_herglotz():
    p = unconstrained()
    cfg = OdeConfig(1e-3, (0.0, 3.0))
    a = integrate_vakonomic(p, ExtendedState([1.0], [0.0], 0.0), cfg)
    b = integrate_herglotz(p.L, ContactState([1.0], [0.0], 0.0), cfg)
    for x, y in ((a.q, b.q), (a.v, b.v), (a.z, b.z)):
        assert np.max(np.abs(x - y)) <= 1e-12


def test_classical_rhs_hand_expanded():
    # L_mu = (v1^2+v2^2)/2 - mu (v2 - q1 v1): v1' = -mu' q1, v2' = mu', mu' = v1^2 / (1 + q1^2)
    p = classical()
    rng = np.random.default_rng(3)
    for _ in range(10):
        q1, q2, v1, mu, z = rng.normal(size=5)
        dq, dv, dz, dmu = vakonomic_rhs(p, ExtendedState([q1, q2], [v1, q1 * v1], z, [mu]))
        rate = v1 ** 2 / (1 + q1 ** 2)
        assert dmu[0] == pytest.approx(rate, abs=1e-7)
        assert dv == pytest.approx([-q1 * rate, rate], abs=1e-7)
        assert dz == pytest.approx(0.5 * v1 ** 2 * (1 + q1 ** 2))
        # differentiated constraint vanishes
        assert abs(dv[1] - dq[0] * v1 - q1 * dv[0]) <= 1e-10


def test_inconsistent_initial_state():
    with pytest.raises(InconsistentStateError):
        integrate_vakonomic(classical(), ExtendedState([0.5, 0.0], [1.0, 0.0], 0.0, [0.0]), OdeConfig(1e-2))


def test_dimension_errors():
    with pytest.raises(ValueError):
        vakonomic_rhs(classical(), ExtendedState([0.0, 0.0], [1.0, 0.0], 0.0))
    with pytest.raises(ValueError):
        solve_vakonomic_bvp(classical(), [1.0], [0.0])


def test_classical_drift_grows_at_most_linearly():
    p = classical()
    s0 = ExtendedState([0.0, 0.0], [1.0, 0.0], 0.0, [0.3])
    for T in (1.0, 2.0, 4.0):
        path = integrate_vakonomic(p, s0, OdeConfig(1e-3, (0.0, T)))
        drift = np.max(np.abs(constraint_residuals(p, path)))
        assert drift <= 1e-6
        assert drift <= 1e-5 * T


def test_free_particle_bvp():
    p = VakonomicProblem.from_strings("v1^2/2", [], 1, [0.0], [1.0])
    path = solve_vakonomic_bvp(p, [0.3])
    assert path.v[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(path.q[:, 0] - path.times)) <= 1e-10


def test_damped_oscillator_bvp_closed_form():
    # q'' = -q - g q', q(0)=0, q(1)=1  =>  q = A exp(-g t/2) sin(wd t)
    g = 0.1
    wd = math.sqrt(1 - g * g / 4)
    A = 1.0 / (math.exp(-g / 2) * math.sin(wd))
    path = solve_vakonomic_bvp(unconstrained(), [0.0])
    assert path.v[0, 0] == pytest.approx(A * wd, abs=1e-6)
    assert abs(path.q[-1, 0] - 1.0) <= 1e-8


def test_classical_bvp_hits_endpoint_on_parabola():
    p = classical()
    path = solve_vakonomic_bvp(p, [1.0, 0.0], [0.0])
    assert np.max(np.abs(path.q[-1] - p.q1)) <= 1e-8
    assert np.max(np.abs(constraint_residuals(p, path))) <= 1e-6
    # the constraint is integrable: q2 = q1^2/2 along every consistent motion
    assert np.max(np.abs(path.q[:, 1] - path.q[:, 0] ** 2 / 2)) <= 1e-6
    # and the optimum traverses the parabola at constant speed
    speed = np.hypot(path.v[:, 0], path.v[:, 1])
    assert np.ptp(speed) <= 1e-6


def test_nonholonomic_bvp_recovers_shot():
    p0 = VakonomicProblem.from_strings("(v1^2 + v2^2 + v3^2)/2", ["v3 - q2*v1"], 3, [0.0] * 3, [0.0] * 3)
    cfg = OdeConfig(2e-3, (0.0, 1.0))
    shot = integrate_vakonomic(p0, ExtendedState([0.0] * 3, [1.0, 0.5, 0.0], 0.0, [0.2]), cfg)
    p = VakonomicProblem(p0.L, p0.constraints, p0.q0, shot.q[-1])
    path = solve_vakonomic_bvp(p, [0.9, 0.6, 0.0], [0.0], cfg)
    assert np.max(np.abs(path.q[-1] - p.q1)) <= 1e-8
    assert path.v[0] == pytest.approx([1.0, 0.5, 0.0], abs=1e-6)
    assert path.mu[0, 0] == pytest.approx(0.2, abs=1e-6)
    assert np.max(np.abs(constraint_residuals(p, path))) <= 1e-6


def test_bvp_all_deduplicates():
    found = solve_vakonomic_bvp_all(unconstrained(), [([0.0], []), ([2.0], []), ([1.0], [])])
    assert len(found) == 1


def test_multiplier_ratio_consistency():
    # z-dependent Lagrangian and constraint so every term of the multiplier equations is active
    g, c = 0.1, 0.1
    p = VakonomicProblem.from_strings("(v1^2 + v2^2)/2 - g*z", ["v2 - q1*v1 - c*z"], 2, [0.0, 0.0], [0.0, 0.0],
                                      params={"g": g, "c": c})
    dt = 1e-3
    path = integrate_vakonomic(p, ExtendedState([0.0, 0.0], [1.0, 0.0], 0.0, [0.4]), OdeConfig(dt, (0.0, 1.0)))
    Lmu = extended_lagrangian(p)
    lam0 = multiplier_evolution(Lmu, path).lam
    lam = path.mu[:, 0] * lam0
    assert lam0[-1] == 1.0

    # lam0' + lam0 L_z - lam_a psi_z = 0 with L_z = -g, psi_z = -c
    res_b = d5(lam0, dt) + lam0[2:-2] * (-g) - lam[2:-2] * (-c)
    assert np.max(np.abs(res_b)) <= 1e-5

    # -d/dt(lam0 dLmu/dv) + lam0 dLmu/dq = 0 for the position coordinates
    pv = np.empty((path.times.size, 2))
    pq = np.empty((path.times.size, 2))
    for r in range(path.times.size):
        _, grad, _ = Lmu.jet([*path.q[r], *path.mu[r]], [*path.v[r], 0.0], path.z[r], rows=())
        pq[r] = grad[0:2]
        pv[r] = grad[3:5]
    for i in range(2):
        res_a = -d5(lam0 * pv[:, i], dt) + lam0[2:-2] * pq[2:-2, i]
        assert np.max(np.abs(res_a)) <= 1e-5


def test_discrete_path_dimension_check_for_extended_lagrangian():
    p = classical()
    # two positions and no multipliers cannot feed a Lagrangian over (q1, q2, mu1)
    path = DiscretePath(np.linspace(0, 1, 5), np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(5))
    with pytest.raises(ValueError):
        multiplier_evolution(extended_lagrangian(p), path)
