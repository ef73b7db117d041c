"""The acceptance suite: nine property and oracle checks at fixed tolerances.

Each check returns a :class:`CriterionResult`; :func:`run_all` runs them in
order and :func:`write_manifest` stores the outcome (with pinned reference
values) as JSON.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import oracle
from .config import ExperimentConfig, load_config
from .fields import (Roof, VerticalField, benchmark_field, benchmark_observable,
                     constant_observable, coordinate_observable, trig_observable,
                     windowed_observable)
from .flow_core import CAT_EXPANSION, CatSuspension, integrate_orbit, lorenz63
from .hyperbolic import compute_clv
from .response import (FieldSchedule, damped_extrapolation, direct_damped_response,
                       divergence_series, finite_difference_response, nonautonomous_response,
                       rho_of_C, susceptibility_extrapolation, theoremB_response)
from .stats import combined_sigma, within_sigma
from .symbolic import (SftSystem, bowen_root, cylinder_integrals, derivative_central_difference,
                       equilibrium_state, leading_eigenvalue, pressure, resonance_scan,
                       suspension_average)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} ({self.runtime:.1f} s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": bool(self.passed),
                "runtime": self.runtime, "details": self.details}


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angle between lines spanned by rows of ``a`` and ``b``."""
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    c = np.abs(np.sum(a * b, axis=-1))
    s = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(s, c)


def _zero_check(rep) -> dict:
    return {"value": rep.value, "sigma": rep.std_error,
            "ok": within_sigma(rep.value, 0.0, rep.std_error)}


# ---------------------------------------------------------------------------


def criterion_1(cfg: ExperimentConfig) -> CriterionResult:
    """Null response for X equal to the flow direction."""
    quick = cfg["acceptance"]["quick"]
    c = CatSuspension(Roof.default())
    X = VerticalField(1.0)
    sys = c.with_perturbation(X)
    A = benchmark_observable(c.roof)
    d = {}
    d["finite_difference"] = _zero_check(finite_difference_response(
        sys, A, 0.02, 500.0 if quick else 2000.0, 40, warmup=10.0, dt=0.05, seed=11))
    d["direct_damped"] = _zero_check(damped_extrapolation(
        c, A, X, [0.2, 0.1], 3.5, 0.05, 5000 if quick else 20000, seed=12))
    d["susceptibility"] = _zero_check(susceptibility_extrapolation(
        c, A, X, [0.4, 0.2, 0.1], 3.5, 0.05, 5000 if quick else 20000, seed=13))
    d["theorem_b"] = _zero_check(theoremB_response(
        c, A, X, n_shadow=200, n_orbits=10, orbit_length=200.0, seed=14))
    passed = all(v["ok"] for v in d.values())
    return CriterionResult(1, "null response for X = flow direction", passed, d)


def criterion_2(cfg: ExperimentConfig) -> CriterionResult:
    """Split formula against finite differences and the damped direct integral."""
    acc = cfg["acceptance"]
    quick = acc["quick"]
    r = Roof.default()
    c = CatSuspension(r)
    X = benchmark_field(r)
    A = benchmark_observable(r)
    fd_T = 2000.0 if quick else acc["fd_T"]
    fd = finite_difference_response(c.with_perturbation(X), A, acc["fd_a"], fd_T,
                                    acc["fd_orbits"], warmup=10.0, dt=0.05, seed=0)
    slope = oracle.fd_slope_oracle(fd.paired_batches[0], fd.paired_batches[1], acc["fd_a"])
    tb = theoremB_response(c, A, X, n_shadow=500 if quick else 2000, n_orbits=20,
                           orbit_length=200.0 if quick else 500.0, seed=1)
    dd = damped_extrapolation(c, A, X, [0.2, 0.1], 3.5, 0.05, 20000 if quick else 200000,
                              seed=2)
    s_fd = combined_sigma(tb.std_error, slope.sigma)
    s_dd = combined_sigma(tb.std_error, dd.std_error)
    d = {
        "fd_slope": slope.slope, "fd_sigma": slope.sigma, "fd_inconclusive": slope.inconclusive,
        "fd_report_value": fd.value, "fd_horizon": fd_T, "fd_orbits": acc["fd_orbits"],
        "fd_a": acc["fd_a"],
        "theorem_b": tb.value, "theorem_b_sigma": tb.std_error,
        "stable_term": tb.diagnostics["stable_term"],
        "unstable_center_term": tb.diagnostics["unstable_center_term"],
        "direct_extrapolated": dd.value, "direct_sigma": dd.std_error,
        "b_vs_fd_in_sigma": abs(tb.value - slope.slope) / s_fd,
        "b_vs_direct_in_sigma": abs(tb.value - dd.value) / s_dd,
        "oracle_matches_report": abs(slope.slope - fd.value) <= 1e-12 * max(1.0, abs(fd.value)),
    }
    passed = (within_sigma(tb.value, slope.slope, s_fd) and within_sigma(tb.value, dd.value, s_dd)
              and d["oracle_matches_report"])
    return CriterionResult(2, "split formula vs finite differences and direct integral", passed, d)


def criterion_3(cfg: ExperimentConfig) -> CriterionResult:
    """Birkhoff mean of C vanishes, with error shrinking like T^-1/2."""
    acc = cfg["acceptance"]
    r = Roof.default()
    c = CatSuspension(r)
    X = benchmark_field(r)
    n_orbits = 4
    d = {}
    sig = []
    ok = True
    for label, T in (("short", acc["c_T_short"]), ("long", acc["c_T_long"])):
        if acc["quick"]:
            T = T / 10
        cs, _ = divergence_series(c, X, n_orbits, T, dt=0.05, stride=5, seed=21)
        m, s = rho_of_C(cs, pooled=True)
        d[f"mean_{label}"] = m
        d[f"sigma_{label}"] = s
        d[f"T_{label}"] = T
        sig.append((T, s))
        ok &= within_sigma(m, 0.0, s)
    slope = math.log(sig[1][1] / sig[0][1]) / math.log(sig[1][0] / sig[0][0])
    d["sigma_slope"] = slope
    d["n_orbits"] = n_orbits
    ok &= abs(slope + 0.5) <= 0.25
    return CriterionResult(3, "Birkhoff mean of C is zero with T^-1/2 error", bool(ok), d)


def criterion_4(cfg: ExperimentConfig) -> CriterionResult:
    """Covariant directions and exponents on the cat suspension."""
    eu, es = oracle.cat_directions()
    lam = math.log(oracle.CAT_LAMBDA)
    d = {}
    c1 = CatSuspension(Roof.constant(1.0))
    tr = integrate_orbit(c1, np.array([0.1234, 0.5678, 0.3]), 600.0, 0.05, seed=0)
    fr = compute_clv(c1, tr, warmup=200.0)
    U = fr.unstable[:, :, 0]
    S = fr.stable[:, :, 0]
    d["unit_roof_unstable_angle"] = float(np.max(_angle(U, np.append(eu, 0.0)[None])))
    d["unit_roof_stable_angle"] = float(np.max(_angle(S, np.append(es, 0.0)[None])))
    ex = np.sort(fr.exponents)[::-1]
    d["exponents"] = ex.tolist()
    d["exponent_error"] = float(np.max(np.abs(ex - np.array([lam, 0.0, -lam]))))
    center_dev = float(np.max(np.abs(fr.center - c1.base_field(fr.points))))
    d["center_deviation"] = center_dev
    r = Roof.default()
    c2 = CatSuspension(r)
    tr2 = integrate_orbit(c2, np.array([0.31, 0.77, 0.2]), 600.0, 0.05, seed=0)
    fr2 = compute_clv(c2, tr2, warmup=200.0)
    Uo, So, _, _ = oracle.cat_splitting_oracle(r.grad, fr2.points[:, :2])
    d["roof_horizontal_unstable_angle"] = float(np.max(_angle(
        np.column_stack([fr2.unstable[:, :2, 0], np.zeros(fr2.n)]), np.append(eu, 0.0)[None])))
    d["roof_unstable_angle_vs_series"] = float(np.max(_angle(fr2.unstable[:, :, 0], Uo)))
    d["roof_stable_angle_vs_series"] = float(np.max(_angle(fr2.stable[:, :, 0], So)))
    passed = (d["unit_roof_unstable_angle"] < 1e-6 and d["unit_roof_stable_angle"] < 1e-6
              and d["exponent_error"] < 1e-3 and center_dev == 0.0
              and d["roof_horizontal_unstable_angle"] < 1e-6
              and d["roof_unstable_angle_vs_series"] < 1e-6
              and d["roof_stable_angle_vs_series"] < 1e-6)
    return CriterionResult(4, "covariant directions and exponents", passed, d)


def _gibbs_cases():
    full = np.ones((2, 2), dtype=int)
    gm = np.array([[1, 1], [1, 0]])
    rng = np.random.default_rng(5)
    cases = [(full, [0.0, 0.0], [1.0, 1.0]), (full, [0.0, math.log(2)], [1.0, 1.0]),
             (full, [0.0, 0.0], [1.0, 2.0]), (gm, [0.3, -0.2], [1.0, 1.5])]
    for n in (3, 4):
        tau = (rng.random((n, n)) < 0.7).astype(int)
        np.fill_diagonal(tau, 1)
        tau[:, 0] = 1
        cases.append((tau, rng.normal(size=n).tolist(), (0.5 + rng.random(n)).tolist()))
    return cases


def criterion_5(cfg: ExperimentConfig) -> CriterionResult:
    """Pressure, Bowen root and memory-1 Gibbs states."""
    full = np.ones((2, 2))
    d = {}
    s = SftSystem(full)
    d["log2_error"] = abs(bowen_root(s) - math.log(2.0))
    d["pressure_log2_error"] = abs(pressure(s, 0.0) - math.log(2.0))
    s2 = SftSystem(full, psi=[1.0, 2.0])
    d["golden_error"] = abs(bowen_root(s2) - math.log(oracle.GOLDEN))
    worst = 0.0
    for tau, phi, psi in _gibbs_cases():
        sft = SftSystem(tau, psi=psi, phi=phi)
        st = equilibrium_state(sft)
        ref = oracle.markov_gibbs_oracle(tau, phi, psi, st.c)
        worst = max(worst, float(np.max(np.abs(st.weights - ref.distribution))),
                    float(np.max(np.abs(st.kernel - ref.kernel))), abs(ref.pressure))
        worst = max(worst, abs(st.c - oracle.bowen_root_oracle(tau, phi, psi)))
    d["gibbs_max_error"] = worst
    passed = (d["log2_error"] < 1e-12 and d["pressure_log2_error"] < 1e-12
              and d["golden_error"] < 1e-10 and worst < 1e-10)
    return CriterionResult(5, "pressure, Bowen root and Gibbs states", passed, d)


def criterion_6(cfg: ExperimentConfig) -> CriterionResult:
    """Resonances from the leading eigenvalue branch."""
    full = np.ones((2, 2))
    d = {}
    strip = tuple(cfg["symbolic"]["strip"])
    su = SftSystem(full)
    cu = bowen_root(su)
    scan = resonance_scan(su, None, None, cu, strip=strip, step=cfg["symbolic"]["step"],
                          tol=cfg["symbolic"]["newton_tol"])
    expected = oracle.constant_roof_resonances(strip[0], strip[1], strip[2])
    found = sorted((r.omega for r in scan.roots if r.refined), key=lambda z: z.real)
    d["constant_roof_roots"] = [complex(w) for w in found]
    d["constant_roof_expected"] = expected
    ok_roots = len(found) == len(expected) and all(
        abs(w - e) < 1e-8 for w, e in zip(found, expected))
    d["constant_roof_ok"] = ok_roots
    worst_l0 = 0.0
    worst_d0 = 0.0
    for tau, phi, psi in _gibbs_cases():
        sft = SftSystem(tau, psi=psi, phi=phi)
        st = equilibrium_state(sft)
        lam0, _ = leading_eigenvalue(sft, None, None, st.c, 0.0)
        worst_l0 = max(worst_l0, abs(lam0 - 1.0))
        dl = derivative_central_difference(sft, None, None, st.c)
        worst_d0 = max(worst_d0, abs(dl + 1j * st.mean_roof))
    d["lambda0_error"] = worst_l0
    d["derivative_error"] = worst_d0
    sg = SftSystem(full, psi=[1.0, oracle.GOLDEN])
    cg = bowen_root(sg)
    fine = resonance_scan(sg, None, None, cg, strip=(2 * math.pi + 0.01, -1e-3, 1e-3), step=1e-3)
    real = fine.real_roots(0.0, 2 * math.pi)
    d["golden_real_roots"] = [complex(r.omega) for r in real]
    d["golden_min_gap"] = float(np.min(np.abs(1 - fine.values[np.argmin(np.abs(fine.im_grid)),
                                                              fine.re_grid > 0.1])))
    passed = ok_roots and worst_l0 < 1e-10 and worst_d0 < 1e-6 and not real
    return CriterionResult(6, "resonances of the twisted transfer matrix", passed, d)


def criterion_7(cfg: ExperimentConfig) -> CriterionResult:
    """Suspension averages: normalization and per-cylinder quadrature."""
    d = {}
    norm_ok = True
    worst = 0.0
    for tau, phi, psi in _gibbs_cases():
        sft = SftSystem(tau, psi=psi, phi=phi)
        st = equilibrium_state(sft)
        one = suspension_average(sft, st, lambda i, t: np.ones_like(t))
        norm_ok &= one == 1.0
        g = np.cos(np.arange(sft.n_states) + 0.5)
        A = lambda i, t, g=g: g[i] * np.exp(-t)
        num = cylinder_integrals(sft, A)
        exact = g * (1.0 - np.exp(-sft.psi))
        worst = max(worst, float(np.max(np.abs(num - exact))))
        ref = oracle.markov_gibbs_oracle(tau, phi, psi, st.c).distribution
        avg = suspension_average(sft, st, A)
        worst = max(worst, abs(avg - (ref @ exact) / (ref @ np.asarray(psi))))
    d["normalization_exact"] = bool(norm_ok)
    d["quadrature_max_error"] = worst
    return CriterionResult(7, "suspension averages", bool(norm_ok and worst < 1e-10), d)


def criterion_8(cfg: ExperimentConfig) -> CriterionResult:
    """Constant schedule reproduces the autonomous integral."""
    r = Roof.default()
    c = CatSuspension(r)
    X = benchmark_field(r)
    A = benchmark_observable(r)
    auto = direct_damped_response(c, A, X, 0.0, 3.0, 0.05, 2000, seed=31)
    non = nonautonomous_response(c, A, FieldSchedule.constant(X, 0.0), 5.0, 3.0, 0.05, 2000,
                                 seed=31)
    diff = abs(auto.value - non.value)
    return CriterionResult(8, "nonautonomous reduction", diff <= 1e-12,
                           {"autonomous": auto.value, "nonautonomous": non.value,
                            "difference": diff})


def _tangent_slope(sys, dt, t, rng, wrap):
    p = sys.sample_initial(4, rng)
    v = rng.normal(size=p.shape)
    q, tv, _ = sys.advance(p, t, dt, v=v)
    errs = []
    for h in (1e-4, 1e-5):
        qh, _, _ = sys.advance(p + h * v, t, dt)
        diff = qh - q
        if wrap:
            diff[:, :2] -= np.round(diff[:, :2])
        errs.append(float(np.max(np.linalg.norm(diff / h - tv, axis=1))))
    return errs, math.log10(errs[0] / errs[1])


def shipped_observables():
    r = Roof.default()
    return [benchmark_observable(r), windowed_observable(r, (1, 1), 0.7, 0.3),
            trig_observable((1, 0)), trig_observable((0, 1)), trig_observable((2, -1), 0.5, 1.0),
            coordinate_observable(0), coordinate_observable(2), constant_observable(2.0)]


def criterion_9(cfg: ExperimentConfig) -> CriterionResult:
    """Tangent maps vs finite differences; observable gradients vs central differences."""
    d = {}
    rng = np.random.default_rng(41)
    r = Roof.default()
    slopes_ok = True
    for name, sys, dt, t, wrap in (
            ("cat_unperturbed", CatSuspension(r), None, 2.0, True),
            ("cat_perturbed", CatSuspension(r, benchmark_field(r), 0.05), 0.05, 2.0, True),
            ("lorenz63", lorenz63(), 0.01, 1.0, False)):
        errs, slope = _tangent_slope(sys, dt, t, rng, wrap)
        d[f"{name}_errors"] = errs
        d[f"{name}_slope"] = slope
        slopes_ok &= abs(slope - 1.0) <= 0.1
    h = 1e-4
    pts = np.column_stack([rng.random((200, 2)), np.zeros(200)])
    pts[:, 2] = (0.05 + 0.9 * rng.random(200)) * r(pts[:, :2])
    worst = 0.0
    for A in shipped_observables():
        num = oracle.central_gradient(A.value, pts, h)
        worst = max(worst, float(np.max(np.abs(num - A.grad(pts)))))
    d["gradient_max_error"] = worst
    d["gradient_bound"] = 1e3 * h * h
    passed = slopes_ok and worst <= 1e3 * h * h
    return CriterionResult(9, "tangent and gradient consistency", bool(passed), d)


CRITERIA: list[Callable[[ExperimentConfig], CriterionResult]] = [
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
    criterion_7, criterion_8, criterion_9]

TIME_LIMITS = {1: 300.0, 2: 1800.0}


def run_criterion(k: int, cfg: ExperimentConfig) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        res = CRITERIA[k - 1](cfg)
    except Exception as exc:  # a crash is a failed criterion, not an aborted suite
        res = CriterionResult(k, CRITERIA[k - 1].__doc__.strip().rstrip("."), False,
                              {"error": f"{type(exc).__name__}: {exc}"})
    res.runtime = time.perf_counter() - t0
    limit = TIME_LIMITS.get(k)
    if limit is not None:
        res.details["time_limit"] = limit
        if res.runtime > limit:
            res.passed = False
    return res


def run_all(cfg: ExperimentConfig | None = None, only=None, echo: bool = False) -> list[CriterionResult]:
    cfg = cfg or load_config(None)
    out = []
    for k in range(1, len(CRITERIA) + 1):
        if only and k not in only:
            continue
        res = run_criterion(k, cfg)
        if echo:
            print(res.line(), flush=True)
        out.append(res)
    return out
