import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddlekit.am_solver import (AMConfig, am_coefficient, am_prox_subproblem, am_rate_bound,
                                 am_run, coefficient_sequence, inexact_floor, make_prox_solver,
                                 plan_tolerances, ram_minimize, restart_count, restart_length,
                                 restarted_am)
from saddlekit.oracle_core import (BudgetExceeded, ContractError, OracleSpec, linear_oracle,
                                   quadratic_oracle)


def zero(d):
    return linear_oracle(np.zeros(d))


def test_first_coefficient():
    for H in (0.5, 2.0, 7.0):
        assert am_coefficient(0.0, H) == pytest.approx(1.0 / (2 * H), rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_coefficient_identity(H):
    a, A = coefficient_sequence(H, 500)
    assert np.allclose(a**2 / A * 2 * H, 1.0, rtol=1e-12, atol=0)
    k = np.arange(1, 501)
    # the fixed point of the recurrence is A_k ~ k^2 / (8H), enough for 4 H R^2 / k^2
    assert np.all(A >= k**2 / (8 * H) * (1 - 1e-12))


def test_one_dimensional_quadratic_rate():
    phi = quadratic_oracle([[1.0]], [-1.0])
    rep = am_run(phi, zero(1), make_prox_solver(zero(1), 0.0), AMConfig(H=2.0, max_iter=50),
                 np.zeros(1), objective=lambda x: 0.5 * (x[0] - 1) ** 2, f_star=0.0)
    assert rep.iterations == 50
    assert rep.value_gap <= 3.2e-3
    assert am_rate_bound(2.0, 1.0, 50) == pytest.approx(3.2e-3)


def test_am_rejects_small_H():
    phi = quadratic_oracle([[4.0]], [0.0])
    with pytest.raises(ContractError):
        am_run(phi, zero(1), make_prox_solver(zero(1), 0.0), AMConfig(H=4.0, max_iter=3), [1.0])


def test_am_callback_stops():
    phi = quadratic_oracle([[1.0]], [-1.0])
    rep = am_run(phi, zero(1), make_prox_solver(zero(1), 0.0), AMConfig(H=2.0, max_iter=50),
                 np.zeros(1), callback=lambda k, s, g: k == 7)
    assert rep.iterations == 7 and len(rep.trace) == 7


def test_prox_subproblem_quadratic_closed_form():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((3, 3))
    Q = M @ M.T + 0.5 * np.eye(3)
    b = rng.standard_normal(3)
    psi = quadratic_oracle(Q, b)
    g, x_md, H = rng.standard_normal(3), rng.standard_normal(3), 2.0
    tol = 1e-9
    z = am_prox_subproblem(g, psi, H, x_md, tol)
    exact = np.linalg.solve(Q + H * np.eye(3), H * x_md - g - b)

    def model(u):
        return g @ (u - x_md) + psi.value(u) + 0.5 * H * (u - x_md) @ (u - x_md)

    assert model(z) - model(exact) <= tol


def test_prox_subproblem_infinite_tolerance():
    z = am_prox_subproblem(np.ones(2), quadratic_oracle(np.eye(2), np.zeros(2)), 1.0, np.ones(2),
                           math.inf)
    assert np.array_equal(z, np.ones(2))


def test_prox_subproblem_linear_psi_exact():
    g, gp, x_md, H = np.array([1.0, -2.0]), np.array([0.5, 0.5]), np.array([3.0, 1.0]), 4.0
    z = am_prox_subproblem(g, linear_oracle(gp), H, x_md, 0.0)
    assert np.array_equal(z, x_md - (g + gp) / H)


def test_restart_length_at_H_equal_mu():
    assert restart_length(1.0, 1.0) == 12
    assert restart_length(3.0, 3.0) == 12


def test_restarted_already_solved():
    phi = quadratic_oracle(np.eye(2), np.zeros(2))
    x0 = np.array([1e-4, 0.0])
    rep = restarted_am(phi, zero(2), OracleSpec.exact(1.0, 1.0), make_prox_solver(zero(2), 0.0),
                       eps=1e-2, sigma=0.0, x0=x0, R0=1e-4)
    assert len(rep.extras["stages"]) - 1 <= 1
    assert phi.value(rep.x_best) <= 1e-2


def test_restarted_contracts_per_stage():
    rng = np.random.default_rng(1)
    d = 6
    Q = np.diag(np.linspace(0.1, 2.0, d))
    b = rng.standard_normal(d)
    xs = -np.linalg.solve(Q, b)
    phi = quadratic_oracle(Q, b)
    R0 = float(np.linalg.norm(xs))
    rep = restarted_am(phi, zero(d), OracleSpec.exact(2.0, 0.1), make_prox_solver(zero(d), 0.0),
                       eps=1e-10, sigma=0.0, x0=np.zeros(d), R0=R0)
    dist = [np.linalg.norm(z - xs) for z in rep.extras["stages"]]
    for r0, r1 in zip(dist, dist[1:]):
        if r0 > 1e-7:
            assert r1 <= 0.5 * r0


def test_restarted_certificate_budget():
    phi = quadratic_oracle(np.diag([1.0, 2.0]), np.ones(2))
    with pytest.raises(BudgetExceeded):
        restarted_am(phi, zero(2), OracleSpec.exact(2.0, 1.0), make_prox_solver(zero(2), 0.0),
                     eps=1e-30, sigma=0.0, x0=np.zeros(2), R0=1.0,
                     certify=lambda x, g: 1.0, safety=1.0)


def test_plan_example():
    b = plan_tolerances(1e-2, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0)
    expected = {
        "phi": 1e-2 / 864**2, "psi": 1e-2 / 864**2,
        "curvature": 1e-2 / (864**2 * 16), "radius": 1e-3 / (5 * 4),
    }
    for key, v in expected.items():
        assert b.branches[key] == pytest.approx(v, rel=1e-12)
    assert b.delta2 == pytest.approx(1e-2 / (864**2 * 16), rel=1e-12)
    assert b.delta2 == pytest.approx(8.37e-10, rel=1e-3)


def test_plan_homogeneity():
    a = plan_tolerances(1e-3, 0.1, 1.0, 2.0, 0.5, 6.0, 3.0).branches
    b = plan_tolerances(2e-3, 0.1, 1.0, 2.0, 0.5, 6.0, 3.0).branches
    for key in ("phi", "psi", "curvature"):
        assert b[key] == pytest.approx(2 * a[key], rel=1e-12)
    assert b["radius"] == pytest.approx(2**1.5 * a["radius"], rel=1e-12)


def test_plan_deterministic_regime():
    b = plan_tolerances(1e-3, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0)
    assert b.sigma0 == 0.0 and b.sigma_tilde == 0.0


def test_plan_rejects_trivial_eps():
    with pytest.raises(ContractError):
        plan_tolerances(10.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0)


def test_inexact_floor_formula():
    A = np.array([1.0, 3.0, 6.0])
    got = inexact_floor(A, 0.1, 0.2)
    want = [2 * 1 * 0.2 / 1 + 0.1, 2 * 4 * 0.2 / 3 + 0.1 + 1 * 0.1 / 3,
            2 * 10 * 0.2 / 6 + 0.1 + 4 * 0.1 / 6]
    assert np.allclose(got, want, rtol=1e-14)


def test_restart_count_trivial():
    assert restart_count(1.0, 1.0, 1.0) == 0


def test_ram_minimize_budget():
    grad = lambda z: (z - 1.0, 0.0)
    prox = lambda g, z, H: (z - g / H, 0.0, 0.0)
    z, g, _, steps = ram_minimize(grad, prox, 2.0, 1.0, np.zeros(2),
                                  lambda z, g, e: np.linalg.norm(g) <= 1e-12, 10**4)
    assert np.allclose(z, 1.0)
    with pytest.raises(BudgetExceeded):
        ram_minimize(grad, prox, 2.0, 1.0, np.zeros(2), lambda *a: False, 5)
