import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from saddlekit.oracle_core import (BudgetExceeded, CallLedger, ContractError, CountedOracle,
                                   OracleClass, OracleSpec, max_function_oracle,
                                   nesterov_minimize, oracle_envelope_check, quadratic_oracle,
                                   sum_oracles)


def test_spec_sum_is_componentwise():
    a = OracleSpec(0.0, 0.1, 0.01, 2.0, 1.0)
    b = OracleSpec(0.0, 0.2, 0.02, 3.0, 0.5)
    s = a + b
    assert s.delta1 == 0.0
    assert s.delta2 == pytest.approx(0.3)
    assert s.sigma0 == pytest.approx(0.03)
    assert (s.L, s.mu) == (5.0, 1.5)


def test_exact_plus_exact_stays_exact():
    s = OracleSpec.exact(2.0, 1.0) + OracleSpec.exact(1.0)
    assert s.is_exact and s.L == 3.0 and s.mu == 1.0


@pytest.mark.parametrize("kw", [dict(delta1=-1), dict(sigma0=1.5), dict(L=1, mu=2), dict(L=-1)])
def test_spec_rejects_bad_fields(kw):
    with pytest.raises(ContractError):
        OracleSpec(**kw)


def _random_quadratic(rng, d):
    M = rng.standard_normal((d, d))
    return M @ M.T + np.eye(d), rng.standard_normal(d)


def test_sum_oracle_matches_parts():
    rng = np.random.default_rng(0)
    a = quadratic_oracle(*_random_quadratic(rng, 4))
    b = quadratic_oracle(*_random_quadratic(rng, 4))
    s = sum_oracles(a, b)
    x = rng.standard_normal(4)
    v, g = s(x)
    va, ga = a(x)
    vb, gb = b(x)
    assert v == va + vb
    assert np.array_equal(g, ga + gb)
    assert s.spec == a.spec + b.spec


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)), st.integers(0, 2**31))
def test_sum_additivity_property(x, seed):
    rng = np.random.default_rng(seed)
    a = quadratic_oracle(*_random_quadratic(rng, 3))
    b = quadratic_oracle(*_random_quadratic(rng, 3))
    v, g = sum_oracles(a, b)(x)
    assert v == a.value(x) + b.value(x)
    assert np.array_equal(g, a.grad(x) + b.grad(x))


def test_sum_rejects_dimension_mismatch():
    with pytest.raises(ContractError):
        sum_oracles(quadratic_oracle(np.eye(2), np.zeros(2)), quadratic_oracle(np.eye(3), np.zeros(3)))


def test_counted_oracle_counts_and_checks_shape():
    led = CallLedger()
    o = quadratic_oracle(np.eye(2), np.zeros(2), oracle_class=OracleClass.GRAD_F, ledger=led,
                         multiplicity=3)
    o(np.zeros(2))
    o.grad(np.ones(2))
    assert led[OracleClass.GRAD_F] == 6
    assert o.calls == 2
    with pytest.raises(ContractError):
        o(np.zeros(3))


def test_ledger_merge_and_diff():
    a, b = CallLedger(), CallLedger()
    a.add(OracleClass.GRAD_F, 2)
    snap = a.snapshot()
    a.add(OracleClass.PROX_H)
    b.add(OracleClass.GRAD_F, 5)
    m = a.merge(b)
    assert m[OracleClass.GRAD_F] == 7 and a[OracleClass.GRAD_F] == 2
    assert m.total() == 8
    assert a.diff(snap) == {**{c.value: 0 for c in OracleClass}, "ProxH": 1}
    assert m.as_row()["grad_f"] == 7


def test_nesterov_certifies_and_fails_loudly():
    Q = np.diag([1.0, 10.0])
    z, gn, n = nesterov_minimize(lambda x: Q @ x - 1.0, np.zeros(2), 10.0, 1.0, 1e-10)
    assert gn <= 1e-10
    assert np.allclose(z, [1.0, 0.1])
    with pytest.raises(BudgetExceeded) as err:
        nesterov_minimize(lambda x: Q @ x - 1.0, np.zeros(2), 10.0, 1.0, 1e-14, max_iter=3)
    assert err.value.best is not None


def test_max_oracle_constant():
    o = max_function_oracle(lambda x, y: y, lambda x, y: x, lambda y: y, L_F=2.0, mu_y=1.0,
                            delta=1e-6, y0=np.zeros(1), dim_x=1, L_w=1.0)
    assert o.L_smooth == 10.0
    assert o.spec.L == 20.0


def _bilinear(seed, d=3, mu_y=0.5):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((d, d))
    B *= 1.0 / np.linalg.norm(B, 2)
    o = max_function_oracle(
        F_grad_x=lambda x, y: B @ y, F_grad_y=lambda x, y: B.T @ x,
        w_grad=lambda y: mu_y * y, L_F=1.0, mu_y=mu_y, delta=1e-10, y0=np.zeros(d), dim_x=d,
        F_value=lambda x, y: x @ B @ y, w_value=lambda y: 0.5 * mu_y * y @ y, L_w=mu_y)
    truth = lambda x: 0.5 * float(np.sum((B.T @ x) ** 2)) / mu_y
    return o, truth, B, mu_y


def test_max_oracle_gradient_matches_closed_form():
    o, _, B, mu_y = _bilinear(1)
    x = np.array([0.3, -1.0, 2.0])
    assert np.allclose(o.grad(x), B @ (B.T @ x) / mu_y, atol=1e-4)


def test_envelope_exact_quadratic_passes():
    o = quadratic_oracle(np.diag([1.0, 3.0]), np.ones(2))
    truth = lambda z: 0.5 * z @ np.diag([1.0, 3.0]) @ z + z.sum()
    assert oracle_envelope_check(o, truth, 100, 0)


def test_envelope_detects_value_shift():
    Q = np.diag([1.0, 3.0])
    base = quadratic_oracle(Q, np.zeros(2))
    d2 = 1e-3
    truth = lambda z: 0.5 * z @ Q @ z
    for sign in (1.0, -1.0):
        shifted = CountedOracle(lambda x, s=sign: (base.value(x) + s * 2 * d2, base.grad(x)),
                                OracleSpec.scalar(d2, 3.0), 2)
        # near x = z a raised model breaks the lower side, a lowered one the upper side
        assert not oracle_envelope_check(shifted, truth, 100, 0, scale=1e-3)


def test_envelope_bilinear_max_oracle():
    o, truth, _, _ = _bilinear(2)
    assert oracle_envelope_check(o, truth, 100, 3)
