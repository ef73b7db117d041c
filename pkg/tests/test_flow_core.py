import numpy as np
import pytest
from hypothesis import given, strategies as st

from srblab import oracle
from srblab.fields import Roof, VerticalField, ZeroField, benchmark_field
from srblab.flow_core import (CAT_EXPANSION, CatSuspension, ChartError, ContractViolation,
                              CustomOde, IntegrationDiverged, backward_nodes, integrate_orbit,
                              lorenz63, pullback_accumulate, tangent_propagate)


def _chart_distance(p, q):
    d = np.array(p, dtype=float) - np.array(q, dtype=float)
    d[..., :2] -= np.round(d[..., :2])
    return np.linalg.norm(d, axis=-1)


def test_zero_field_gives_constant_trajectory():
    sys = CustomOde(ZeroField(3), 3)
    p0 = np.array([0.3, -0.2, 0.7])
    tr = integrate_orbit(sys, p0, 1.0, 0.1)
    assert np.all(tr.points == p0)


def test_unit_roof_vertical_motion(cat_unit):
    tr = integrate_orbit(cat_unit, np.array([0.2, 0.3, 0.0]), 0.5, 0.05)
    assert np.allclose(tr.points[-1], [0.2, 0.3, 0.5], atol=1e-15)
    assert tr.events == []


def test_unit_roof_crossing_applies_cat_map(cat_unit):
    tr = integrate_orbit(cat_unit, np.array([0.2, 0.3, 0.0]), 1.0, 0.05)
    ref = oracle.OracleResult  # noqa: F841 (oracle module is the independent reference)
    x = (np.array([0.2, 0.3]) @ np.array([[2, 1], [1, 1]]).T) % 1.0
    assert _chart_distance(tr.points[-1], np.append(x, 0.0)) < 1e-12
    assert len(tr.events) == 1 and tr.events[0].time == pytest.approx(1.0)


def test_unit_speed_invariant(cat, rng):
    p = cat.sample_initial(10, rng)
    assert np.allclose(np.linalg.norm(cat.field(p), axis=1), 1.0)


def test_samples_and_csv(cat):
    tr = integrate_orbit(cat, np.array([0.1, 0.2, 0.3]), 1.0, 0.25, seed=7)
    assert len(tr.samples) == 5
    rows = list(tr.to_csv_rows())
    assert rows[0][0] == 0.0 and len(rows[0]) == 4
    assert np.all(np.diff(tr.times) > 0)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.integers(0, 1000))
def test_flow_composition_exact_suspension(t1, t2, seed):
    c = CatSuspension(Roof.default())
    p = c.sample_initial(1, np.random.default_rng(seed))[0]
    a, _, _ = c.advance(p, t1 + t2)
    b, _, _ = c.advance(c.advance(p, t1)[0], t2)
    assert _chart_distance(a, b) < 1e-9


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 1000))
def test_flow_composition_rk4(n1, n2, seed):
    dt = 0.05
    r = Roof.default()
    c = CatSuspension(r, benchmark_field(r), 0.1)
    p = c.sample_initial(1, np.random.default_rng(seed))[0]
    t1, t2 = n1 * dt, n2 * dt
    a, _, _ = c.advance(p, t1 + t2, dt)
    b, _, _ = c.advance(c.advance(p, t1, dt)[0], t2, dt)
    assert _chart_distance(a, b) < 10 * dt ** 4 * (t1 + t2)


def test_flow_composition_lorenz():
    sys = lorenz63()
    p = np.array([1.0, 2.0, 20.0])
    dt = 0.01
    a, _, _ = sys.advance(p, 0.5, dt)
    b, _, _ = sys.advance(sys.advance(p, 0.2, dt)[0], 0.3, dt)
    assert np.linalg.norm(a - b) < 10 * dt ** 4 * 0.5


def test_numba_and_numpy_paths_agree(rng):
    r = Roof.default()
    c = CatSuspension(r, benchmark_field(r) + VerticalField(0.5), 0.2)
    p = c.sample_initial(50, rng)
    a, _, _ = c.advance(p, 3.0, 0.05)
    c2 = c.with_parameter(0.2)
    c2.use_accel = False
    b, _, _ = c2.advance(p, 3.0, 0.05)
    assert np.max(_chart_distance(a, b)) < 1e-12


def test_tangent_of_flow_direction(cat):
    tr = integrate_orbit(cat, np.array([0.4, 0.1, 0.2]), 3.0, 0.05)
    v = tangent_propagate(cat, tr, cat.field(tr.points[:1])[0])
    assert np.allclose(v, cat.field(tr.points), atol=1e-12)


def test_tangent_of_zero(cat):
    tr = integrate_orbit(cat, np.array([0.4, 0.1, 0.2]), 2.0, 0.05)
    assert np.all(tangent_propagate(cat, tr, np.zeros(3)) == 0)


def test_unstable_growth_unit_roof(cat_unit):
    eu, _ = oracle.cat_directions()
    tr = integrate_orbit(cat_unit, np.array([0.3, 0.6, 0.0]), 5.0, 0.05)
    v = tangent_propagate(cat_unit, tr, np.append(eu, 0.0))
    for n in range(1, 6):
        i = int(round(n / 0.05))
        assert np.linalg.norm(v[i]) == pytest.approx(oracle.CAT_LAMBDA ** n, rel=1e-12)
    assert CAT_EXPANSION == pytest.approx(oracle.CAT_LAMBDA)


def test_tangent_rejects_foreign_trajectory(cat, cat_unit):
    tr = integrate_orbit(cat_unit, np.array([0.3, 0.6, 0.0]), 1.0, 0.05)
    with pytest.raises(ContractViolation):
        tangent_propagate(cat, tr, np.zeros(3))


@pytest.mark.parametrize("name", ["cat", "lorenz"])
def test_tangent_richardson_slope(name, rng):
    if name == "cat":
        r = Roof.default()
        sys, dt, t = CatSuspension(r, benchmark_field(r), 0.05), 0.05, 2.0
    else:
        sys, dt, t = lorenz63(), 0.01, 1.0
    p = sys.sample_initial(3, rng)
    v = rng.normal(size=p.shape)
    q, tv, _ = sys.advance(p, t, dt, v=v)
    errs = []
    for h in (1e-4, 1e-5):
        d = sys.advance(p + h * v, t, dt)[0] - q
        if name == "cat":
            d[:, :2] -= np.round(d[:, :2])
        errs.append(np.max(np.linalg.norm(d / h - tv, axis=1)))
    assert abs(np.log10(errs[0] / errs[1]) - 1.0) < 0.1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_time():
    from srblab.fields import FunctionField
    blow = FunctionField(lambda p: p ** 2, lambda p: np.stack([np.diag(2 * x) for x in p]))
    sys = CustomOde(blow, 2)
    with pytest.raises(IntegrationDiverged) as info:
        integrate_orbit(sys, np.array([1.0, 1.0]), 5.0, 0.01)
    assert 0.9 < info.value.time < 1.2


def test_perturbed_backward_is_rejected(rng):
    r = Roof.default()
    c = CatSuspension(r, benchmark_field(r), 0.1)
    with pytest.raises(ChartError):
        backward_nodes(c, c.sample_initial(2, rng), 1.0, 0.05)


def test_volume_preserved_unit_roof(cat_unit, rng):
    p = cat_unit.sample_initial(40000, rng)
    q, _, _ = cat_unit.advance(p, 2.7)
    # box counts on a coarse grid stay uniform within Monte Carlo error
    counts, _ = np.histogramdd(q, bins=(4, 4, 4), range=((0, 1), (0, 1), (0, 1)))
    expected = len(p) / 64
    assert np.max(np.abs(counts - expected)) < 5 * np.sqrt(expected)


# --- pullback ------------------------------------------------------------------

def test_pullback_of_zero(cat, rng):
    p = cat.sample_initial(3, rng)
    out = pullback_accumulate(cat, p, ZeroField(3), 2.0, 0.05)
    assert np.all(out == 0)


def test_pullback_of_flow_field(cat, rng):
    p = cat.sample_initial(3, rng)
    T = 2.0
    out = pullback_accumulate(cat, p, cat.base_field, T, 0.05)
    assert np.allclose(out, T * cat.base_field(p), atol=1e-12)


def test_pullback_rejects_nonpositive_horizon(cat):
    with pytest.raises(ContractViolation):
        pullback_accumulate(cat, np.array([0.1, 0.1, 0.1]), ZeroField(3), 0.0, 0.05)


def test_pullback_of_stable_field_converges(cat_unit, rng):
    _, es = oracle.cat_directions()
    Y = lambda q: np.tile(np.append(es, 0.0), (q.shape[0], 1))
    p = cat_unit.sample_initial(5, rng)
    v10 = pullback_accumulate(cat_unit, p, Y, 10.0, 0.05)
    assert np.all(np.linalg.norm(v10, axis=1) <= 1.0 / (1.0 - 1.0 / oracle.CAT_LAMBDA) + 1e-9)
    # forward marching amplifies round-off by lambda^T; re-project onto the stable line
    e3 = np.append(es, 0.0)
    proj = lambda j, q, v: np.outer(v @ e3, e3)
    v25 = pullback_accumulate(cat_unit, p, Y, 25.0, 0.05, project=proj)
    v50 = pullback_accumulate(cat_unit, p, Y, 50.0, 0.05, project=proj)
    assert np.max(np.abs(v50 - v25)) < 1e-8
