import numpy as np
import pytest

from saddlekit.oracle_core import ContractError
from saddlekit.problems import brute_force_gap, generate, kkt_solve
from saddlekit.saddle_framework import (Order, SlidingF, SlidingH, framework_constants,
                                        loop1_smoothness, loop2_accuracy, loop3_quadratic_prox,
                                        pair_gap_bound, plan_framework, recover_pair,
                                        sliding_max_oracle, solve_saddle, split_accuracy)

BASE = dict(L_f=2.0, mu_x=0.5, L_G=1.0, L_h=2.0, mu_y=0.5)


def test_framework_constants_example():
    H1, H2, H3 = framework_constants(1.0, 3.0, 0.1)
    assert H1 == 2.0
    assert H2 == pytest.approx(2 * (1 + 2 / 2.1), rel=1e-12)
    assert H2 == pytest.approx(3.9048, abs=1e-4)
    assert H3 == 6.0
    assert framework_constants(1.0, 3.0, 0.1, Order.INVERSE) == (H1, H3, H2)


def test_loop1_constant():
    assert loop1_smoothness(4.0, 1.0, 0.5) == 14.0


def test_loop2_accuracy_example():
    eps2, sig2, dbar = loop2_accuracy(1e-3, 0.1, 2.0, 0.1, 1.0, 1.0, 0.5)
    assert eps2 == pytest.approx((2.1 / 4) ** 2 * 0.5 / 8 * 1e-3, rel=1e-12)
    assert eps2 == pytest.approx(1.723e-5, rel=1e-3)
    assert sig2 <= 0.05 and dbar > 0


def test_split_accuracy_sums_to_eps():
    p = generate((3, 3), BASE, 0).to_problem()
    ey, ex = split_accuracy(p, 1e-3)
    assert ey + pair_gap_bound(p, ex, ey) <= 1e-3 * (1 + 1e-12)


def test_loop3_stationary():
    xb = np.array([0.3, -1.2])
    assert np.allclose(loop3_quadratic_prox(np.zeros(2), np.zeros(2), 1.0, 2.0, xb, xb), xb)


def test_loop3_matches_linear_solve():
    rng = np.random.default_rng(0)
    g1, g2, xm, xl = rng.standard_normal((4, 2))
    H2, H3 = 1.5, 0.7
    u = loop3_quadratic_prox(g1, g2, H2, H3, xm, xl)
    M = (H2 + H3) * np.eye(2)
    assert np.allclose(M @ u, H2 * xm + H3 * xl - g1 - g2)


def test_loop3_large_H3_limit():
    xm, xl = np.zeros(2), np.ones(2)
    u = loop3_quadratic_prox(np.ones(2), np.ones(2), 1e12, 1.0, xm, xl)
    assert np.allclose(u, xm, atol=1e-10)


def _closed_form_grad(inst, x, H, y0):
    C = inst.C_bar + H * np.eye(inst.dims[1])
    y = np.linalg.solve(C, inst.B_bar.T @ x - inst.c_bar + H * y0)
    return inst.B_bar @ y


@pytest.mark.parametrize("variant,L_h", [(SlidingH.HGEG, 2.0), (SlidingH.HLEG, 0.5),
                                         (SlidingH.PROXH, 2.0)])
def test_sliding_oracle_gradient(variant, L_h):
    inst = generate((3, 3), dict(BASE, L_h=L_h, mu_y=0.5), 1)
    p = inst.to_problem()
    y0 = np.zeros(3)
    delta = 1e-10
    o = sliding_max_oracle(p, 1.0, y0, delta, variant=variant)
    x = np.array([0.5, -0.2, 1.0])
    g = o.grad(x)
    # |y~ - y*| <= sqrt(2 delta / 2 / mu), the gradient error is L_G times that
    tol = p.L_G * np.sqrt(delta / (p.mu_y + 1.0))
    assert np.linalg.norm(g - _closed_form_grad(inst, x, 1.0, y0)) <= tol
    if variant is SlidingH.PROXH:
        snap = p.ledger.snapshot()
        assert snap["GradH_i"] == 0 and snap["ProxH"] > 0


def test_sliding_variant_contracts():
    p = generate((2, 2), dict(BASE, L_h=0.5, mu_y=0.5), 2).to_problem(with_prox=False)
    with pytest.raises(ContractError):
        sliding_max_oracle(p, 1.0, np.zeros(2), 1e-6, variant=SlidingH.HGEG)
    with pytest.raises(ContractError):
        sliding_max_oracle(p, 1.0, np.zeros(2), 1e-6, variant=SlidingH.PROXH)
    with pytest.raises(ContractError):
        plan_framework(p, sliding_f=SlidingF.FLEG)


def test_recover_pair_exact():
    inst = generate((3, 2), BASE, 3)
    xs, ys = kkt_solve(inst)
    x = recover_pair(ys, inst.to_problem(), 1e-14)
    assert np.allclose(x, xs, atol=1e-6)


def test_recover_pair_distance_bound():
    inst = generate((2, 2), BASE, 4)
    p = inst.to_problem()
    xs, ys = kkt_solve(inst)
    y = ys + np.array([0.05, -0.03])
    eps_x = 1e-8
    x = recover_pair(y, p, eps_x)
    lhs = float(np.sum((x - xs) ** 2))
    rhs = 8 * (p.L_G / p.mu_x) ** 2 * float(np.sum((y - ys) ** 2)) + 4 * eps_x / p.mu_x
    assert lhs <= rhs


@pytest.mark.parametrize("order", [Order.STANDARD, Order.INVERSE])
@pytest.mark.parametrize("seed", [0, 1])
def test_solve_saddle_certified(order, seed):
    inst = generate((3, 3), BASE, seed)
    sol = solve_saddle(inst.to_problem(with_prox=False), 1e-5, plan={"order": order})
    assert brute_force_gap(inst, sol.x_hat, sol.y_hat) <= 1e-5
    assert sol.sigma_certified == 0.0
    assert sum(sol.extras["calls"].values()) == sol.ledger.total()


def test_solve_saddle_already_solved():
    inst = generate((2, 2), BASE, 5)
    xs, ys = kkt_solve(inst)
    sol = solve_saddle(inst.to_problem(with_prox=False), 1e-2, x0=xs, y0=ys)
    assert sol.extras["loop1"] == 0
    assert brute_force_gap(inst, sol.x_hat, sol.y_hat) <= 1e-2


def test_solve_saddle_rejects_bad_eps():
    p = generate((2, 2), BASE, 6).to_problem()
    with pytest.raises(ContractError):
        solve_saddle(p, 0.0)
