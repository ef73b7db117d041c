import numpy as np
import pytest
from hypothesis import given, strategies as st

from srblab import oracle
from srblab.acceptance import shipped_observables
from srblab.fields import (FieldTerm, Roof, TrigTerm, VerticalField, WindowedTrigField, ZeroField,
                           benchmark_field, lorenz_field, lorenz_rho_field, window, window_prime)


def _interior_points(roof, rng, n=100):
    x = rng.random((n, 2))
    s = (0.05 + 0.9 * rng.random(n)) * roof(x)
    return np.column_stack([x, s])


def _fd_jacobian(F, p, h=1e-6):
    cols = []
    for j in range(p.shape[1]):
        e = np.zeros(p.shape[1])
        e[j] = h
        cols.append((F(p + e) - F(p - e)) / (2 * h))
    return np.stack(cols, axis=2)


def test_roof_rejects_low_minimum():
    with pytest.raises(ValueError):
        Roof(1.0, (TrigTerm(0.6, (1, 0)),))


def test_default_roof_bounds(roof):
    assert roof.lower_bound == pytest.approx(0.95)
    assert roof.upper_bound == pytest.approx(1.05)
    assert not roof.is_constant and Roof.constant(2.0).is_constant


@given(st.floats(0.0, 1.0))
def test_window_vanishes_at_ends_and_is_bounded(u):
    w = window(np.array([u]))[0]
    assert 0.0 <= w <= 1.0
    assert window(np.array([0.0, 1.0])) == pytest.approx([0.0, 0.0], abs=1e-30)


def test_window_prime_matches_difference():
    u = np.linspace(0.01, 0.99, 50)
    h = 1e-6
    assert np.allclose((window(u + h) - window(u - h)) / (2 * h), window_prime(u), atol=1e-7)


@pytest.mark.parametrize("make", [benchmark_field, lambda r: benchmark_field(r) * 2.5,
                                  lambda r: benchmark_field(r) + VerticalField(0.3)])
def test_field_jacobians_match_differences(roof, rng, make):
    X = make(roof)
    p = _interior_points(roof, rng)
    assert np.max(np.abs(_fd_jacobian(X, p) - X.jacobian(p))) < 1e-6


def test_lorenz_jacobians(rng):
    p = rng.normal(size=(50, 3)) * 10
    for X in (lorenz_field(), lorenz_rho_field()):
        assert np.max(np.abs(_fd_jacobian(X, p, 1e-5) - X.jacobian(p))) < 1e-5


def test_windowed_field_vanishes_on_seam(roof, rng):
    X = benchmark_field(roof)
    x = rng.random((20, 2))
    for s in (np.zeros(20), roof(x)):
        assert np.max(np.abs(X(np.column_stack([x, s])))) < 1e-15


def test_windowed_field_requires_matching_roof(roof):
    X = WindowedTrigField(roof, (FieldTerm(2, 1.0, (0, 1)),))
    assert X.roof is roof


def test_zero_field(rng):
    p = rng.random((5, 3))
    assert np.all(ZeroField(3)(p) == 0) and np.all(ZeroField(3).jacobian(p) == 0)


@pytest.mark.parametrize("A", shipped_observables(), ids=lambda a: a.name)
def test_observable_gradients_second_order(roof, rng, A):
    p = _interior_points(roof, rng)
    e1 = np.max(np.abs(oracle.central_gradient(A.value, p, 1e-3) - A.grad(p)))
    e2 = np.max(np.abs(oracle.central_gradient(A.value, p, 5e-4) - A.grad(p)))
    assert e1 < 1e-3
    if e1 > 1e-9:
        assert 3.0 < e1 / e2 < 5.0


def test_observable_algebra(rng):
    A, B = shipped_observables()[2:4]
    p = rng.random((10, 3))
    assert np.allclose((A + B)(p), A(p) + B(p))
    assert np.allclose(A.scaled(3.0).grad(p), 3.0 * A.grad(p))
