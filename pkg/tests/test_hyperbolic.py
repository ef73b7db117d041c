import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srblab import oracle
from srblab.fields import Roof, VerticalField, ZeroField, benchmark_field
from srblab.flow_core import CatSuspension, ChartError, integrate_orbit, lorenz63
from srblab.hyperbolic import (ConditioningError, SplitFrame, UnsupportedDimension, compute_clv,
                               estimate_divergence_C, frame_at, split_field)


def _angle(a, b):
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    c = np.abs(np.sum(a * b, axis=-1))
    return np.arccos(np.clip(c, 0.0, 1.0))


@pytest.fixture(scope="module")
def unit_frame():
    c1 = CatSuspension(Roof.constant(1.0))
    tr = integrate_orbit(c1, np.array([0.1234, 0.5678, 0.3]), 120.0, 0.05)
    return c1, compute_clv(c1, tr, warmup=40.0)


def test_clv_unit_roof_exponents(unit_frame):
    _, fr = unit_frame
    lam = math.log(oracle.CAT_LAMBDA)
    assert np.allclose(np.sort(fr.exponents)[::-1], [lam, 0.0, -lam], atol=1e-12)


def test_clv_unit_roof_directions(unit_frame):
    c1, fr = unit_frame
    eu, es = oracle.cat_directions()
    assert np.max(_angle(fr.unstable[:, :, 0], np.append(eu, 0.0))) < 1e-6
    assert np.max(_angle(fr.stable[:, :, 0], np.append(es, 0.0))) < 1e-6
    assert np.all(fr.center == c1.base_field(fr.points))


def test_clv_csv_rows(unit_frame):
    _, fr = unit_frame
    row = next(fr.to_csv_rows())
    assert len(row) == 11 and row[-1] > 1.0


def test_frame_at_matches_series_oracle(rng):
    r = Roof.default()
    c = CatSuspension(r)
    p = c.sample_initial(20, rng)
    fr = frame_at(c, p)
    U, S, _, _ = oracle.cat_splitting_oracle(r.grad, p[:, :2])
    assert np.max(_angle(fr.unstable[:, :, 0], U)) < 1e-6
    assert np.max(_angle(fr.stable[:, :, 0], S)) < 1e-6


def test_frame_horizontal_unstable_part_is_roof_independent(rng):
    c = CatSuspension(Roof.default())
    fr = frame_at(c, c.sample_initial(10, rng))
    eu, _ = oracle.cat_directions()
    assert np.max(_angle(fr.unstable[:, :2, 0], eu)) < 1e-6


def test_covariance_of_frame(rng):
    c = CatSuspension(Roof.default())
    p = c.sample_initial(8, rng)
    fr = frame_at(c, p)
    moved = fr.transported(c, 2.3)
    direct = frame_at(c, moved.points)
    assert np.max(_angle(moved.unstable[:, :, 0], direct.unstable[:, :, 0])) < 1e-6
    assert np.max(_angle(moved.stable[:, :, 0], direct.stable[:, :, 0])) < 1e-6


def test_frame_at_rejects_bad_dims(cat):
    with pytest.raises(UnsupportedDimension):
        frame_at(cat, np.array([[0.1, 0.2, 0.3]]), dims=(1, 2))


def test_frame_at_rejects_noninvertible():
    with pytest.raises(ChartError):
        frame_at(lorenz63(), np.array([[1.0, 1.0, 20.0]]))


def test_conditioning_error():
    p = np.array([[0.1, 0.2, 0.3]])
    v = np.array([[[1.0], [0.0], [0.0]]])
    fr = SplitFrame(p, v, np.array([[0.0, 0.0, 1.0]]), v.copy())
    with pytest.raises(ConditioningError):
        fr.check_conditioning()


# --- field splitting --------------------------------------------------------------

def test_split_of_flow_field(cat, rng):
    fr = frame_at(cat, cat.sample_initial(10, rng))
    sp = split_field(cat.base_field, fr)
    assert np.allclose(sp.Xc, cat.base_field(fr.points), atol=1e-12)
    assert np.allclose(sp.Xu, 0, atol=1e-12) and np.allclose(sp.Xs, 0, atol=1e-12)
    assert np.allclose(sp.eta, 1.0, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_split_reconstructs_field(seed):
    r = Roof.default()
    c = CatSuspension(r)
    fr = frame_at(c, c.sample_initial(4, np.random.default_rng(seed)), warmup=10.0)
    X = benchmark_field(r)
    sp = split_field(X, fr)
    assert np.allclose(sp.Xc + sp.Xs + sp.Xu, X(fr.points), atol=1e-12)


def test_split_dual_basis(cat, rng):
    fr = frame_at(cat, cat.sample_initial(5, rng))
    pu, pc, ps = fr.projectors()
    eye = np.eye(3)
    assert np.allclose(pu + pc + ps, eye, atol=1e-12)
    assert np.allclose(pu @ pu, pu, atol=1e-12)
    assert np.allclose(pu @ ps, 0, atol=1e-12)


# --- divergence -------------------------------------------------------------------

def test_divergence_of_flow_field_vanishes(cat, rng):
    fr = frame_at(cat, cat.sample_initial(6, rng))
    d = estimate_divergence_C(cat, cat.base_field, fr, richardson=False)
    assert np.max(np.abs(d.values)) < 1e-6
    assert d.tags == ("from-X^c", "from-X^u")


def test_divergence_of_zero_field(cat, rng):
    fr = frame_at(cat, cat.sample_initial(4, rng))
    d = estimate_divergence_C(cat, ZeroField(3), fr, richardson=False)
    assert np.all(d.values == 0)


def test_divergence_vertical_unit_roof(cat_unit, rng):
    fr = frame_at(cat_unit, cat_unit.sample_initial(4, rng))
    d = estimate_divergence_C(cat_unit, VerticalField(0.7), fr, richardson=False)
    assert np.max(np.abs(d.values)) < 1e-8


def test_divergence_matches_chart_oracle(rng):
    r = Roof.default()
    c = CatSuspension(r)
    X = benchmark_field(r)
    p = c.sample_initial(12, rng)
    fr = frame_at(c, p)
    d = estimate_divergence_C(c, X, fr)
    ref = oracle.cat_divergence_oracle(X.jacobian, r.grad, fr.points)
    assert np.max(np.abs(d.values - ref)) < 1e-5


def test_divergence_needs_one_unstable_direction(rng):
    p = np.array([[0.1, 0.2, 0.3]])
    fr = SplitFrame(p, np.eye(3)[None, :, :2], np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3, 0)))
    with pytest.raises(UnsupportedDimension):
        estimate_divergence_C(CatSuspension(Roof.constant(1.0)), ZeroField(3), fr)
