import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srblab.fields import (Roof, VerticalField, ZeroField, benchmark_field, benchmark_observable,
                           constant_observable, trig_observable)
from srblab.flow_core import CatSuspension, ContractViolation
from srblab.response import (FieldSchedule, Method, birkhoff_average, damped_extrapolation,
                             direct_damped_response, finite_difference_response,
                             nonautonomous_response, rho_of_C, stable_shadow_term,
                             susceptibility_curve, theoremB_response, unstable_center_term)

ONE = constant_observable(1.0)


def _within(value, sigma, target=0.0, k=3.0):
    return abs(value - target) <= k * sigma + 1e-10


# --- Birkhoff averages ----------------------------------------------------------------

def test_birkhoff_constant(cat):
    est = birkhoff_average(cat, ONE, 20.0, 8, 2.0)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_birkhoff_lebesgue_on_unit_roof(cat_unit):
    est = birkhoff_average(cat_unit, trig_observable((1, 0)), 200.0, 20, 5.0)
    assert _within(est.mean, est.std_error)


def test_birkhoff_error_shrinks_with_horizon(cat_unit):
    A = trig_observable((1, 1))
    e1 = birkhoff_average(cat_unit, A, 200.0, 20, 5.0, seed=1)
    e2 = birkhoff_average(cat_unit, A, 800.0, 20, 5.0, seed=1)
    assert 0.25 < e2.std_error / e1.std_error < 0.85


def test_birkhoff_contract(cat):
    with pytest.raises(ContractViolation):
        birkhoff_average(cat, ONE, 1.0, 2, 2.0)


# --- finite differences ---------------------------------------------------------------

def test_fd_constant_observable_exact(cat, bench):
    X, _ = bench
    r = finite_difference_response(cat.with_perturbation(X), ONE, 0.02, 20.0, 4)
    assert r.value == 0.0 and r.method is Method.FINITE_DIFFERENCE


def test_fd_null_response_for_flow_direction(cat, bench):
    _, A = bench
    sys = cat.with_perturbation(VerticalField(1.0))
    r = finite_difference_response(sys, A, 0.02, 300.0, 8)
    assert _within(r.value, r.std_error)
    assert {"a_step", "horizon", "n_orbits"} <= set(r.diagnostics)


# --- direct integral and susceptibility ----------------------------------------------

KW = dict(T=3.0, dt=0.05, n_orbits=400, seed=5)


def test_direct_zero_field(cat, bench):
    _, A = bench
    r = direct_damped_response(cat, A, ZeroField(3), 0.1, **KW)
    assert r.value == 0.0


def test_direct_constant_observable(cat, bench):
    X, _ = bench
    assert direct_damped_response(cat, ONE, X, 0.1, **KW).value == 0.0


def test_direct_diagnostics(cat, bench):
    X, A = bench
    r = direct_damped_response(cat, A, X, 0.1, **KW)
    for k in ("eps", "horizon", "tail_integrand", "n_clipped"):
        assert k in r.diagnostics


def test_chi_at_imaginary_axis_equals_direct(cat, bench):
    X, A = bench
    eps = 0.2
    d = direct_damped_response(cat, A, X, eps, **KW)
    c = susceptibility_curve(cat, A, X, [0.0, 1.0], eps, **KW)
    assert abs(c.at(1j * eps) - d.value) < 1e-12


def test_chi_zero_field(cat, bench):
    _, A = bench
    c = susceptibility_curve(cat, A, ZeroField(3), [0.0, 0.5], 0.1, **KW)
    assert np.all(c.values == 0)


def test_chi_conjugacy(cat, bench):
    X, A = bench
    c = susceptibility_curve(cat, A, X, [-1.3, -0.4, 0.4, 1.3], 0.1, **KW)
    assert np.allclose(c.values[::-1], np.conj(c.values), rtol=0, atol=1e-13)
    rows = list(c.to_csv_rows())
    assert len(rows) == 4 and len(rows[0]) == 5


def test_chi_requires_positive_damping(cat, bench):
    X, A = bench
    with pytest.raises(ContractViolation):
        susceptibility_curve(cat, A, X, [0.0], 0.0, **KW)


@settings(max_examples=6, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_in_field_and_observable(c1, c2):
    r = Roof.default()
    cat = CatSuspension(r)
    X, A = benchmark_field(r), benchmark_observable(r)
    Y, B = VerticalField(1.0), trig_observable((0, 1))
    kw = dict(T=1.0, dt=0.05, n_orbits=60, seed=9)
    lhs = direct_damped_response(cat, A, X * c1 + Y * c2, 0.1, **kw).value
    rhs = (c1 * direct_damped_response(cat, A, X, 0.1, **kw).value
           + c2 * direct_damped_response(cat, A, Y, 0.1, **kw).value)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))
    lhs = direct_damped_response(cat, A.scaled(c1) + B.scaled(c2), X, 0.1, **kw).value
    rhs = (c1 * direct_damped_response(cat, A, X, 0.1, **kw).value
           + c2 * direct_damped_response(cat, B, X, 0.1, **kw).value)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_extrapolation_is_richardson(cat, bench):
    X, A = bench
    r = damped_extrapolation(cat, A, X, [0.2, 0.1], **KW)
    d = r.diagnostics
    assert r.value == pytest.approx(2 * d["value_eps_0.1"] - d["value_eps_0.2"], abs=1e-13)


# --- nonautonomous response ------------------------------------------------------------

def test_nonautonomous_constant_schedule_equals_direct(cat, bench):
    X, A = bench
    d = direct_damped_response(cat, A, X, 0.0, **KW)
    n = nonautonomous_response(cat, A, FieldSchedule.constant(X, 0.0), 2.0, **KW)
    assert abs(n.value - d.value) < 1e-12


def test_nonautonomous_zero_schedule(cat, bench):
    _, A = bench
    n = nonautonomous_response(cat, A, FieldSchedule.constant(ZeroField(3)), 1.0, **KW)
    assert n.value == 0.0


def test_nonautonomous_switch_off_is_truncated_curve(cat, bench):
    from srblab.flow_core import _quadrature_weights
    X, A = bench
    kw = dict(KW, T=8.0)
    d = direct_damped_response(cat, A, X, 0.0, **kw)
    n = nonautonomous_response(cat, A, FieldSchedule.switch_off(X, 1.0), 6.0, **kw)
    w = _quadrature_weights(len(d.curve) - 1, kw["dt"], rule="trapezoid")
    keep = d.curve_times >= 5.0 - 1e-9
    assert abs(n.value - float(np.sum(w[keep] * d.curve[keep]))) < 1e-12
    assert n.diagnostics["autonomous_nodes"] == np.sum(keep)


def test_nonautonomous_rejects_nonconstant_past(cat, bench):
    X, A = bench
    bad = FieldSchedule(X, 0.0, lambda tau: ZeroField(3))
    bad.field_at = lambda tau: X * (1.0 + tau)
    with pytest.raises(ContractViolation):
        nonautonomous_response(cat, A, bad, 1.0, **KW)


# --- split formula ---------------------------------------------------------------------

def test_shadow_term_of_flow_field_is_zero(cat, bench):
    _, A = bench
    s = stable_shadow_term(cat, A, cat.base_field, T_back=5.0, n_samples=50)
    assert abs(s.value) < 1e-12


def test_shadow_term_constant_observable(cat, bench):
    X, _ = bench
    assert stable_shadow_term(cat, ONE, X, T_back=5.0, n_samples=50).value == 0.0


def test_shadow_term_geometric_tail(cat_unit, bench):
    X, A = bench
    s10 = stable_shadow_term(cat_unit, A, X, T_back=10.0, n_samples=100, seed=3)
    s20 = stable_shadow_term(cat_unit, A, X, T_back=20.0, n_samples=100, seed=3)
    assert abs(s20.value - s10.value) < 1e-6
    assert s20.diagnostics["max_log_contraction"] < -15.0


def test_unstable_center_constant_observable(cat):
    c = np.random.default_rng(0).normal(size=(400, 4))
    t = unstable_center_term(cat, ONE, c, np.ones((2000, 4)), 5, 0.05)
    assert t.value == 0.0


def test_unstable_center_zero_C(cat, bench):
    _, A = bench
    a = np.random.default_rng(0).normal(size=(2000, 4))
    t = unstable_center_term(cat, A, np.zeros((400, 4)), a, 5, 0.05)
    assert t.value == 0.0


def test_rho_of_C_pooled_error():
    c = np.random.default_rng(1).normal(size=(2000, 8))
    m, s = rho_of_C(c)
    mp, sp = rho_of_C(c, pooled=True)
    assert m == mp
    assert sp == pytest.approx(1 / np.sqrt(c.size), rel=0.35)


def test_theoremB_zero_field_exact(cat, bench):
    _, A = bench
    r = theoremB_response(cat, A, ZeroField(3), T_back=2.0, n_shadow=20, n_orbits=2,
                          orbit_length=30.0, corr_T=1.0)
    assert r.value == 0.0
    assert {"stable_term", "unstable_center_term", "horizon"} <= set(r.diagnostics)
