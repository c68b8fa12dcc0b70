import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cogur import nonlinear as nl
from cogur.errors import ConfigurationError, NumericalError
from cogur.geometry import build_interval
from cogur.wentzell import BulkBoundaryField

S = np.linspace(-3, 3, 61)
GEOM = build_interval(1.0, 32)


def test_g_tilde_examples():
    assert np.allclose(nl.g_tilde(nl.NonlinearitySpec(nl.zero(), nl.polynomial([0, 0, 0, 1])), 0.5, 2.0)(S), S**3 - S)
    assert np.allclose(nl.g_tilde(nl.NonlinearitySpec(nl.zero(), nl.zero()), 0.3, 2.0)(S), -0.6 * S)
    gt = nl.g_tilde(nl.NonlinearitySpec(nl.zero(), nl.polynomial([0, 0.6])), 0.3, 2.0)
    assert np.allclose(gt(S), 0.0) and np.allclose(gt.derivative(S), 0.0)


def test_evaluate_F_examples():
    spec = nl.NonlinearitySpec.from_g_tilde(nl.polynomial([0, -1, 0, 1]), nl.polynomial([0, -1, 0, 1]), 0.5, 1.0)
    F = evaluate = nl.evaluate_F(BulkBoundaryField(np.ones(4), np.ones(2)), spec, 0.5, 1.0)
    assert np.allclose(F.u, 0) and np.allclose(F.v, 0)
    cube = nl.NonlinearitySpec(nl.polynomial([0, 0, 0, 1]), nl.zero())
    F = nl.evaluate_F(BulkBoundaryField(np.array([-1.0, 0.0, 2.0]), np.zeros(2)), cube, 0.5, 1.0)
    assert np.array_equal(F.u, [-1.0, 0.0, 8.0])
    zero = nl.evaluate_F(BulkBoundaryField(np.zeros(3), np.zeros(2)), cube, 0.5, 1.0)
    assert not zero.u.any() and not zero.v.any()


def test_evaluate_F_overflow_names_node():
    spec = nl.NonlinearitySpec(nl.polynomial([0, 0, 0, 0, 0, 1]), nl.zero())
    with pytest.raises(NumericalError, match="node 1"):
        nl.evaluate_F(BulkBoundaryField(np.array([0.0, 1e80, 0.0]), np.zeros(2)), spec, 0.5, 1.0)


def test_sign_growth_examples():
    r = nl.validate_sign_growth(nl.NonlinearitySpec(nl.polynomial([0, -1, 0, 1]), nl.arctan()))
    assert r.passed and r.M_f == 1.0 and r.r1 == 4.0 and r.M_g == 0.0 and r.r2 == 2.0
    r = nl.validate_sign_growth(nl.NonlinearitySpec(nl.polynomial([0, 0, -1]), nl.zero()))
    assert not r.passed and math.isinf(r.M_f)


def test_sign_constant_uses_critical_points():
    # f' = 3 s^2 - 6 s + 1 has its minimum -2 at s = 1
    c = nl.constants(nl.polynomial([0, 1, -3, 1]))
    assert c.M == pytest.approx(2.0, abs=1e-12)


@given(coeffs=st.lists(st.floats(-3, 3), min_size=2, max_size=4), lead=st.floats(0.1, 3))
@settings(max_examples=50, deadline=None)
def test_constants_bound_samples(coeffs, lead):
    f = nl.polynomial([*coeffs, lead] if len(coeffs) % 2 == 0 else [*coeffs, 0.0, lead][: len(coeffs) + 1])
    c = nl.constants(f)
    if not math.isfinite(c.M):
        return
    s = np.concatenate([-np.logspace(-3, 6, 400), [0.0], np.logspace(-3, 6, 400)])
    assert np.all(f.derivative(s) >= -c.M - 1e-9 * (1 + np.abs(f.derivative(s))))
    bound = c.ell * (1 + np.abs(s) ** (c.r - 1))
    assert np.all(np.abs(f(s)) <= bound * (1 + 1e-9))


def test_identity_g_from_split():
    rng = np.random.default_rng(3)
    spec = nl.NonlinearitySpec(nl.zero(), nl.polynomial([0.2, 1.0, 0.0, 0.5]))
    v = rng.normal(size=50)
    nu, beta = 0.4, 1.7
    F = nl.evaluate_F(BulkBoundaryField(np.zeros(1), v), spec, nu, beta)
    assert np.allclose(F.v + nu * beta * v, spec.g(v), atol=1e-13)


def test_balance_anti_dissipative_boundary():
    spec = nl.NonlinearitySpec.from_g_tilde(nl.polynomial([0, 0, 0, 1]), nl.polynomial([0, -1]), 0.5, 1.0)
    rep = nl.check_balance(spec, 0.5, 1.0, GEOM, 0.5)
    assert rep.passed and rep.classification == nl.BALANCE and rep.witness_eps is not None


def test_balance_dissipative_bypass():
    spec = nl.NonlinearitySpec.from_g_tilde(nl.polynomial([0, 0, 0, 1]), nl.polynomial([0, 0, 0, 1]), 0.5, 1.0)
    rep = nl.check_balance(spec, 0.5, 1.0, GEOM, 0.5)
    assert rep.passed and rep.classification == nl.DISSIPATIVE


def test_balance_exponent_precondition():
    spec = nl.NonlinearitySpec(nl.polynomial([0, -1]), nl.polynomial([0, 0, 0, 1]))
    rep = nl.check_balance(spec, 0.5, 1.0, GEOM, 0.5)
    assert not rep.passed and "r1" in rep.reason


@pytest.mark.parametrize("c_g", [-0.05, -0.2, -0.4])
def test_balance_monotone_in_bulk_coefficient(c_g):
    results = []
    for c_f in np.linspace(0.0, 3.0, 13):
        spec = nl.NonlinearitySpec.from_g_tilde(nl.polynomial([0, c_f]), nl.polynomial([0, c_g]), 0.5, 1.0)
        results.append(nl.check_balance(spec, 0.5, 1.0, GEOM, 0.5).passed)
    assert results == sorted(results)  # False..False True..True


def test_balance_explicit_constant():
    spec = nl.NonlinearitySpec.from_g_tilde(nl.polynomial([0, 1.0]), nl.polynomial([0, -0.4]), 0.5, 1.0)
    assert nl.check_balance(spec, 0.5, 1.0, GEOM, 0.5, C_omega=0.1).passed
    assert not nl.check_balance(spec, 0.5, 1.0, GEOM, 0.5, C_omega=2.0).passed


def test_primitives():
    hf, hg = nl.primitives(nl.NonlinearitySpec(nl.polynomial([0, 1]), nl.polynomial([0, 0, 0, 1])))
    assert np.allclose(hf(S), S**2 / 2)
    assert np.allclose(hg(S), 0.75 * S**4)
    h, _ = nl.primitives(nl.NonlinearitySpec(nl.polynomial([0, -1, 0, 1]), nl.zero()))
    assert np.allclose(h(S), 0.75 * S**4 - S**2 / 2)
    ha, _ = nl.primitives(nl.NonlinearitySpec(nl.arctan(), nl.zero()))
    # int_0^s t/(1+t^2) dt = log(1+s^2)/2
    assert ha(2.0) == pytest.approx(0.5 * math.log(5.0), abs=1e-10)


def test_limit_shifted_examples():
    fb, _ = nl.limit_shifted(nl.NonlinearitySpec(nl.zero(), nl.zero()), 2.0, 1.0, 0.5, 0.5)
    assert np.allclose(fb(S), S)
    _, gb = nl.limit_shifted(nl.NonlinearitySpec(nl.zero(), nl.zero()), 1.0, 2.0, 0.5, 0.5)
    assert np.allclose(gb(S), S)
    fb, _ = nl.limit_shifted(nl.NonlinearitySpec(nl.polynomial([0, 0, 0, 1]), nl.zero()), 4.0, 1.0, 0.75, 0.5)
    assert np.allclose(fb(S), S**3 + S)


def test_scalar_function_descriptions():
    assert nl.scalar_function({"family": "arctan", "amplitude": 2.0})(1.0) == pytest.approx(2 * math.atan(1))
    assert nl.scalar_function({"coeffs": [1, 2]})(3.0) == 7.0
    with pytest.raises(ConfigurationError):
        nl.scalar_function({"family": "exp"})
    assert nl.NonlinearitySpec(nl.polynomial([0, 2]), nl.zero()).is_linear
