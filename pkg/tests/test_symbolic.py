import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srblab import oracle
from srblab.symbolic import (DegeneracyError, ExtensionError, NotMixingError, ResolutionError,
                             SftSystem, bowen_root, cat_srb_sft, check_mixing,
                             cylinder_integrals, derivative_central_difference,
                             eigenvalue_derivative, equilibrium_state, flow_correlation,
                             leading_eigenvalue, periodic_measure_value, pressure,
                             pressure_curve, resonance_scan, suspension_average,
                             transfer_operator, variational_gap)

FULL = np.ones((2, 2), dtype=int)
GM = np.array([[1, 1], [1, 0]])


@st.composite
def mixing_systems(draw, max_n=3):
    n = draw(st.integers(2, max_n))
    bits = draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    tau = np.array(bits, dtype=int).reshape(n, n)
    tau[0, :] = 1
    tau[:, 0] = 1
    np.fill_diagonal(tau, 1)
    phi = draw(st.lists(st.floats(-1.5, 1.5), min_size=n, max_size=n))
    psi = draw(st.lists(st.floats(0.3, 2.5), min_size=n, max_size=n))
    return tau, np.array(phi), np.array(psi)


# --- mixing and pressure -------------------------------------------------------------------

def test_mixing_powers():
    assert check_mixing(FULL) == 1
    assert check_mixing(np.eye(2)) is None
    assert check_mixing(GM) == 2


def test_not_mixing_raises():
    with pytest.raises(NotMixingError):
        equilibrium_state(SftSystem(np.eye(2)))


def test_pressure_examples():
    assert pressure(SftSystem(FULL), 0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert pressure(SftSystem(GM), 0.0) == pytest.approx(math.log(oracle.GOLDEN), abs=1e-12)


@given(mixing_systems(), st.floats(-3, 3))
def test_pressure_constant_shift(sys_, kappa):
    tau, phi, _ = sys_
    s = SftSystem(tau)
    assert pressure(s, phi + kappa) == pytest.approx(pressure(s, phi) + kappa, abs=1e-12)


def test_memory_words_are_admissible():
    s = SftSystem(GM, memory=3)
    assert set(s.words) == {w for w in [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
                            if GM[w[0], w[1]] and GM[w[1], w[2]]}
    assert pressure(s, 0.0) == pytest.approx(math.log(oracle.GOLDEN), abs=1e-12)


def test_roof_below_minimum_rejected():
    with pytest.raises(ValueError):
        SftSystem(FULL, psi=[1.0, 1e-4])


# --- Bowen root ----------------------------------------------------------------------------

def test_bowen_examples():
    assert bowen_root(SftSystem(FULL)) == pytest.approx(math.log(2), abs=1e-12)
    assert bowen_root(SftSystem(FULL, psi=[1.0, 2.0])) == pytest.approx(
        math.log(oracle.GOLDEN), abs=1e-12)


@given(mixing_systems(), st.floats(-2, 2))
def test_bowen_shift_identity(sys_, kappa):
    tau, _, psi = sys_
    s = SftSystem(tau, psi=psi)
    assert bowen_root(s, kappa * psi) == pytest.approx(bowen_root(s, 0.0) + kappa, abs=1e-10)


@given(mixing_systems())
def test_bowen_matches_bisection_oracle(sys_):
    tau, phi, psi = sys_
    c = bowen_root(SftSystem(tau, psi=psi, phi=phi))
    assert c == pytest.approx(oracle.bowen_root_oracle(tau, phi, psi), abs=1e-10)


# --- equilibrium states --------------------------------------------------------------------

def test_bernoulli_state():
    st_ = equilibrium_state(SftSystem(FULL))
    assert np.allclose(st_.weights, 0.5, atol=1e-14)
    assert np.allclose(st_.kernel, 0.5, atol=1e-14)


def test_memory_one_weights():
    st_ = equilibrium_state(SftSystem(FULL, phi=[0.0, math.log(2)]))
    assert np.allclose(st_.weights, [1 / 3, 2 / 3], atol=1e-12)


@given(mixing_systems())
def test_gibbs_matches_stationary_chain_oracle(sys_):
    tau, phi, psi = sys_
    s = SftSystem(tau, psi=psi, phi=phi)
    st_ = equilibrium_state(s)
    ref = oracle.markov_gibbs_oracle(tau, phi, psi, st_.c)
    assert np.allclose(st_.weights, ref.distribution, atol=1e-10)
    assert np.allclose(st_.kernel, ref.kernel, atol=1e-10)
    assert abs(ref.pressure) < 1e-10
    assert st_.invariance_residual() < 1e-10
    assert abs(variational_gap(s, st_)) < 1e-10


@settings(max_examples=10, deadline=None)
@given(mixing_systems(max_n=3))
def test_variational_inequality_on_periodic_orbits(sys_):
    tau, phi, psi = sys_
    s = SftSystem(tau, psi=psi, phi=phi)
    c = bowen_root(s)
    g = phi - c * psi
    for cyc in oracle.periodic_orbit_enumerator(tau, 8):
        assert periodic_measure_value(s, cyc, g) <= 1e-12


@given(mixing_systems())
def test_pressure_monotone_with_exact_slope(sys_):
    tau, phi, psi = sys_
    s = SftSystem(tau, psi=psi, phi=phi)
    grid = np.linspace(-1.0, 1.0, 9)
    vals, slopes = pressure_curve(s, grid)
    assert np.all(np.diff(vals) < 0)
    h = 1e-5
    fd = (pressure_curve(s, grid + h)[0] - pressure_curve(s, grid - h)[0]) / (2 * h)
    assert np.allclose(fd, slopes, atol=1e-7)


def test_cat_srb_preset():
    s = cat_srb_sft()
    assert check_mixing(s.tau) is not None
    assert abs(bowen_root(s)) < 1e-12
    st_ = equilibrium_state(s)
    assert st_.invariance_residual() < 1e-12
    assert st_.entropy() == pytest.approx(math.log(oracle.CAT_LAMBDA), abs=1e-12)


def test_degenerate_spectrum_detected():
    # a period-two cycle is not aperiodic; the Perron root is not isolated
    s = SftSystem(np.array([[0, 1], [1, 0]]))
    with pytest.raises((NotMixingError, DegeneracyError)):
        equilibrium_state(s)


# --- suspension averages -------------------------------------------------------------------

@given(mixing_systems())
def test_suspension_normalization(sys_):
    tau, phi, psi = sys_
    s = SftSystem(tau, psi=psi, phi=phi)
    st_ = equilibrium_state(s)
    assert suspension_average(s, st_, lambda i, t: np.ones_like(t)) == 1.0
    half = suspension_average(s, st_, lambda i, t: (t < 0.5 * s.psi[i]).astype(float))
    assert half == 0.5


def test_suspension_average_cylinder_observable():
    tau = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 0]])
    phi, psi = np.array([0.2, -0.4, 0.1]), np.array([1.0, 1.7, 0.6])
    s = SftSystem(tau, psi=psi, phi=phi)
    st_ = equilibrium_state(s)
    g = np.array([3.0, -1.0, 0.5])
    val = suspension_average(s, st_, lambda i, t: np.full_like(t, g[i]))
    ref = oracle.markov_gibbs_oracle(tau, phi, psi, st_.c).distribution
    assert val == pytest.approx(ref @ (g * psi) / (ref @ psi), abs=1e-10)


def test_suspension_quadrature_accuracy():
    s = SftSystem(FULL, psi=[1.0, 2.0])
    st_ = equilibrium_state(s)
    vals = cylinder_integrals(s, lambda i, t: np.exp(-t))
    assert np.allclose(vals, 1 - np.exp(-s.psi), atol=1e-11)
    assert np.isfinite(suspension_average(s, st_, lambda i, t: np.exp(-t)))


def test_suspension_resolution_error():
    s = SftSystem(FULL, psi=[0.1, 2.0])
    with pytest.raises(ResolutionError):
        suspension_average(s, equilibrium_state(s), lambda i, t: t, n_cells=16)


# --- correlations --------------------------------------------------------------------------

def test_correlation_against_constant_is_zero():
    s = SftSystem(FULL, psi=[1.0, 1.5])
    st_ = equilibrium_state(s)
    cs = flow_correlation(s, st_, lambda w, h: np.cos(h), lambda w, h: np.ones_like(h),
                          [0.0, 0.7, 2.0], n_samples=2000)
    assert np.all(cs.values == 0)


def test_correlation_at_zero_is_covariance():
    s = SftSystem(FULL, psi=[1.0, 1.5])
    st_ = equilibrium_state(s)
    B = lambda w, h: np.sin(h) + w
    cs = flow_correlation(s, st_, B, B, [0.0], n_samples=40000, seed=4)
    mean = suspension_average(s, st_, lambda i, t: np.sin(t) + i)
    sq = suspension_average(s, st_, lambda i, t: (np.sin(t) + i) ** 2)
    assert abs(cs.values[0] - (sq - mean ** 2)) < 3 * cs.sigma[0]


def test_constant_roof_correlation_is_periodic():
    s = SftSystem(FULL)
    st_ = equilibrium_state(s)
    B = lambda w, h: np.cos(2 * np.pi * h)
    t = np.array([0.0, 0.3, 0.5, 1.0, 1.3, 1.5, 4.3])
    cs = flow_correlation(s, st_, B, B, t, n_samples=20000, seed=2)
    assert abs(cs.values[1] - cs.values[4]) < 1e-10
    assert abs(cs.values[2] - cs.values[5]) < 1e-10
    assert abs(cs.values[1] - cs.values[6]) < 1e-10
    assert abs(cs.values[0] - 0.5) < 3 * cs.sigma[0] + 0.01
    assert abs(cs.values[2] + 0.5) < 3 * cs.sigma[2] + 0.01


def test_correlation_extension_error():
    s = SftSystem(FULL)
    st_ = equilibrium_state(s)
    with pytest.raises(ExtensionError):
        flow_correlation(s, st_, lambda w, h: h, lambda w, h: h, [5.0], n_samples=100, n_ext=2)


# --- transfer operators and resonances -----------------------------------------------------

def test_leading_eigenvalue_at_zero():
    s = SftSystem(FULL, psi=[1.0, 2.0], phi=[0.3, -0.1])
    c = bowen_root(s)
    lam, vec = leading_eigenvalue(s, None, None, c, 0.0)
    assert abs(lam - 1) < 1e-10
    assert np.all(vec.real > 0)
    op = transfer_operator(s, None, None, c)
    assert np.array_equal(op.matrix != 0, s.adjacency != 0)
    assert np.allclose(op.normalized().sum(axis=1), 1.0, atol=1e-12)


@given(st.floats(-6, 6), st.floats(-0.5, 0.1))
def test_constant_roof_branch_is_exponential(re, im):
    s = SftSystem(FULL)
    w = complex(re, im)
    lam, _ = leading_eigenvalue(s, None, None, math.log(2), w)
    assert abs(lam - np.exp(-1j * w)) < 1e-12


@given(st.floats(-4, 4), st.floats(-0.4, 0.1))
def test_branch_conjugacy(re, im):
    s = SftSystem(FULL, psi=[1.0, 1.4], phi=[0.0, 0.2])
    c = bowen_root(s)
    w = complex(re, im)
    a, _ = leading_eigenvalue(s, None, None, c, w)
    b, _ = leading_eigenvalue(s, None, None, c, -w.conjugate())
    assert abs(b - a.conjugate()) < 1e-9


@given(mixing_systems())
def test_derivative_at_zero_is_mean_roof(sys_):
    tau, phi, psi = sys_
    s = SftSystem(tau, psi=psi, phi=phi)
    st_ = equilibrium_state(s)
    d = eigenvalue_derivative(s, None, None, st_.c, 0.0)
    assert abs(d - (-1j * st_.mean_roof)) < 1e-10
    dc = derivative_central_difference(s, None, None, st_.c)
    assert abs(dc - (-1j * st_.mean_roof)) < 1e-6


def test_constant_roof_resonances():
    s = SftSystem(FULL)
    scan = resonance_scan(s, None, None, math.log(2), strip=(7.0, -0.5, 0.1))
    found = sorted(r.omega.real for r in scan.real_roots(-7.1, 7.1))
    expected = oracle.constant_roof_resonances(7.0)
    assert len(found) == len(expected)
    assert np.max(np.abs(np.array(found) - np.array(expected))) < 1e-8
    assert abs(scan.lambda0 - 1) < 1e-10 and abs(scan.dlambda0) > 0


def test_golden_roof_has_no_real_resonance():
    s = SftSystem(FULL, psi=[1.0, oracle.GOLDEN])
    scan = resonance_scan(s, None, None, bowen_root(s), strip=(2 * math.pi + 0.01, -1e-3, 1e-3),
                          step=1e-3)
    assert scan.real_roots(0.0, 2 * math.pi, im_tol=1e-3) == []
    assert any(abs(r.omega) < 1e-8 for r in scan.roots)
    rows = list(scan.to_csv_rows())
    assert len(rows) == scan.values.size and len(rows[0]) == 5
