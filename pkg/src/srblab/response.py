"""SRB averages and the derivative of SRB averages with respect to the perturbation.

Four routes to the same derivative are provided: central finite differences
of Birkhoff averages, the damped direct integral of the tangent response,
its Fourier-Laplace transform (susceptibility), and the split formula
(stable shadow term plus a correlation with the cu-divergence ``C``).  A
time-dependent version of the direct integral covers perturbations that
switch on or off.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import Observable, VectorField, ZeroField
from .flow_core import (ContractViolation, FlowSystem, _quadrature_weights, backward_nodes,
                        pullback_accumulate)
from .hyperbolic import (SplitFrame, _normalize_cols, estimate_divergence_C,
                         frame_at, split_field)
from .stats import N_BATCHES, batch_mean_error, batch_means


class Method(str, enum.Enum):
    FINITE_DIFFERENCE = "FiniteDifference"
    DIRECT_DAMPED = "DirectDamped"
    SUSCEPTIBILITY = "Susceptibility"
    THEOREM_B = "TheoremBSplit"
    NONAUTONOMOUS = "Nonautonomous"


class SplittingQualityError(RuntimeError):
    pass


@dataclass
class BirkhoffEstimate:
    mean: float
    std_error: float
    horizon: float
    n_orbits: int
    warmup: float
    dt: float = 0.05
    n_excluded: int = 0
    batch_means: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "horizon": self.horizon,
                "n_orbits": self.n_orbits, "warmup": self.warmup, "dt": self.dt,
                "n_excluded": self.n_excluded}


@dataclass
class ResponseReport:
    method: Method
    value: float
    std_error: float
    diagnostics: dict = field(default_factory=dict)
    inconclusive: bool = False
    batch_values: Optional[np.ndarray] = None
    curve_times: Optional[np.ndarray] = None
    curve: Optional[np.ndarray] = None
    paired_batches: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {"method": self.method.value, "value": float(self.value),
                "std_error": float(self.std_error), "inconclusive": bool(self.inconclusive),
                "diagnostics": {k: self.diagnostics[k] for k in sorted(self.diagnostics)}}

    def curve_rows(self):
        if self.curve is None:
            return
        for t, g in zip(self.curve_times, self.curve):
            yield [float(t), float(g)]


@dataclass
class TermEstimate:
    """One term of the split formula, with its batch-means error."""

    value: float
    std_error: float
    diagnostics: dict = field(default_factory=dict)
    batch_values: Optional[np.ndarray] = None

    def __float__(self) -> float:
        return float(self.value)


@dataclass
class SusceptibilityCurve:
    omegas: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    eps: float
    horizon: float
    n_samples: int
    batch_values: Optional[np.ndarray] = None

    def at(self, omega: complex) -> complex:
        i = int(np.argmin(np.abs(self.omegas - omega)))
        return complex(self.values[i])

    def to_csv_rows(self):
        for w, c, s in zip(self.omegas, self.values, self.sigma):
            yield [float(w.real), float(w.imag), float(c.real), float(c.imag), float(s)]


CSV_SUSCEPTIBILITY = ["re_omega", "im_omega", "re_chi", "im_chi", "sigma"]


# ---------------------------------------------------------------------------
# Sampling and Birkhoff averages


def srb_samples(system: FlowSystem, n: int, seed: int, warmup: float, dt: float) -> np.ndarray:
    """Uniform chart draws evolved through ``warmup``; rows that diverge are dropped."""
    rng = np.random.default_rng(seed)
    p = system.sample_initial(n, rng)
    if warmup > 0:
        p, _, _ = system.advance(p, warmup, dt, strict=False)
        p = p[np.all(np.isfinite(p), axis=1)]
    return p


def _birkhoff_sums(system, A, T, n_orbits, warmup, dt, seed, n_batches):
    rng = np.random.default_rng(seed)
    p = system.sample_initial(n_orbits, rng)
    p, _, _ = system.advance(p, warmup, dt, strict=False)
    n_steps = int(round(T / dt))
    if n_steps < n_batches:
        raise ContractViolation(f"horizon T={T} gives fewer than {n_batches} samples")
    sums = np.zeros((n_batches, p.shape[0]))
    counts = np.zeros(n_batches)
    alive = np.all(np.isfinite(p), axis=1)
    for k in range(n_steps):
        b = min(k * n_batches // n_steps, n_batches - 1)
        vals = A(np.where(alive[:, None], p, 0.0))
        sums[b] += vals
        counts[b] += 1
        if k < n_steps - 1:
            p, _, _ = system.advance(p, dt, dt, strict=False)
            alive &= np.all(np.isfinite(p), axis=1)
    return sums, counts, alive


def _estimate_from_sums(sums, counts, alive, T, warmup, dt, n_orbits) -> BirkhoffEstimate:
    n_alive = int(alive.sum())
    if n_alive == 0:
        raise FloatingPointError("all orbits diverged")
    bm = sums[:, alive].sum(axis=1) / (counts * n_alive)
    total = sums[:, alive].sum() / (counts.sum() * n_alive)
    return BirkhoffEstimate(float(total), batch_mean_error(bm), T, n_alive, warmup, dt,
                            n_orbits - n_alive, bm)


def birkhoff_average(system: FlowSystem, A: Observable, T: float, n_orbits: int,
                     warmup: float, dt: float = 0.05, seed: int = 0,
                     n_batches: int = N_BATCHES) -> BirkhoffEstimate:
    """Time average of ``A`` over ``n_orbits`` orbits of length ``T`` after ``warmup``.

    Samples are taken every ``dt`` (rectangle rule); the error is from
    ``n_batches`` consecutive time blocks pooled over orbits.  Orbits that
    become non-finite are excluded and counted in ``n_excluded``.
    """
    if not (T > warmup > 0):
        raise ContractViolation("birkhoff_average needs T > warmup > 0")
    sums, counts, alive = _birkhoff_sums(system, A, T, n_orbits, warmup, dt, seed, n_batches)
    return _estimate_from_sums(sums, counts, alive, T, warmup, dt, n_orbits)


def finite_difference_response(system: FlowSystem, A: Observable, a_step: float, T: float,
                               n_orbits: int, warmup: float = 10.0, dt: float = 0.05,
                               seed: int = 0, n_batches: int = N_BATCHES) -> ResponseReport:
    """``(rho_{+a}(A) - rho_{-a}(A)) / 2a`` with common initial points.

    The error uses paired batch means, so the correlation created by the
    common random numbers is accounted for.
    """
    if a_step <= 0:
        raise ContractViolation("a_step must be positive")
    if not (T > warmup > 0):
        raise ContractViolation("finite differences need T > warmup > 0")
    a0 = system.a
    sp, cp, ap = _birkhoff_sums(system.with_parameter(a0 + a_step), A, T, n_orbits, warmup,
                                dt, seed, n_batches)
    sm, cm, am = _birkhoff_sums(system.with_parameter(a0 - a_step), A, T, n_orbits, warmup,
                                dt, seed, n_batches)
    alive = ap & am
    plus = _estimate_from_sums(sp, cp, alive, T, warmup, dt, n_orbits)
    minus = _estimate_from_sums(sm, cm, alive, T, warmup, dt, n_orbits)
    value = (plus.mean - minus.mean) / (2 * a_step)
    diffs = (plus.batch_means - minus.batch_means) / (2 * a_step)
    se = batch_mean_error(diffs)
    return ResponseReport(
        Method.FINITE_DIFFERENCE, float(value), se,
        {"a_step": a_step, "horizon": T, "n_orbits": float(plus.n_orbits), "warmup": warmup,
         "dt": dt, "mean_plus": plus.mean, "mean_minus": minus.mean,
         "sigma_plus": plus.std_error, "sigma_minus": minus.std_error,
         "n_excluded": float(plus.n_excluded)},
        inconclusive=bool(se > abs(value)), batch_values=diffs,
        paired_batches=(plus.batch_means, minus.batch_means))


# ---------------------------------------------------------------------------
# Lag integrals of the tangent response


def _lag_weights(times: np.ndarray, dt: float, re_omegas: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Trapezoid weights times ``exp(i omega t)`` with ``omega = re + i eps``; shape (m, K+1)."""
    base = _quadrature_weights(len(times) - 1, dt, rule="trapezoid")
    damp = np.exp(-np.outer(eps, times))
    phase = np.outer(re_omegas, times)
    return base * damp * (np.cos(phase) + 1j * np.sin(phase))


def _lag_engine(system: FlowSystem, A: Observable, fields: Sequence[VectorField],
                node_field: np.ndarray, weights: np.ndarray, points: np.ndarray, dt: float,
                clip: float = 1e12, chunk: int = 50000):
    """Per-sample sums ``sum_j W[m, j] (D A)(f^{t_j} x) T f^{t_j} X_{node_field[j]}(x)``.

    Returns ``(totals (N, m), node_means (nf, K+1), n_clipped)``.
    """
    n = points.shape[0]
    K = weights.shape[1] - 1
    m = weights.shape[0]
    nf = len(fields)
    totals = np.zeros((n, m), dtype=complex)
    node_sums = np.zeros((nf, K + 1))
    n_clipped = 0
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        p = points[lo:hi]
        v = np.stack([f(p) for f in fields], axis=2)
        acc = np.zeros((hi - lo, m), dtype=complex)
        bad = np.zeros(hi - lo, dtype=bool)
        for j in range(K + 1):
            g = np.einsum("nd,ndf->nf", A.grad(p), v)
            g[bad] = 0.0
            node_sums[:, j] += g.sum(axis=0)
            acc += g[:, node_field[j]][:, None] * weights[None, :, j]
            if j < K:
                p, v, _ = system.advance(p, dt, dt, v=v, strict=False)
                size = np.max(np.abs(v), axis=(1, 2))
                newly = ~bad & ~(np.isfinite(size) & (size < clip))
                if np.any(newly):
                    bad |= newly
                    v[bad] = 0.0
                    p[bad] = points[lo:hi][bad]
        acc[bad] = 0.0
        n_clipped += int(bad.sum())
        totals[lo:hi] = acc
    return totals, node_sums / n, n_clipped


def _prepare_samples(system, n_orbits, seed, warmup, dt):
    pts = srb_samples(system, n_orbits, seed, warmup, dt)
    if pts.shape[0] < N_BATCHES:
        raise ContractViolation(f"need at least {N_BATCHES} samples")
    return pts


def _lag_grid(T: float, dt: float) -> np.ndarray:
    K = int(round(T / dt))
    if K < 1 or abs(K * dt - T) > 1e-9 * max(T, 1.0):
        raise ContractViolation("horizon T must be a positive multiple of dt")
    return np.arange(K + 1) * dt


def _autonomous(system, A, X, re_omegas, eps, T, dt, n_orbits, seed, warmup):
    times = _lag_grid(T, dt)
    W = _lag_weights(times, dt, np.asarray(re_omegas, float), np.asarray(eps, float))
    pts = _prepare_samples(system, n_orbits, seed, warmup, dt)
    if A.is_constant:
        z = np.zeros((pts.shape[0], W.shape[0]), dtype=complex)
        return z, np.zeros((1, len(times))), 0, times
    totals, node_means, n_clip = _lag_engine(system, A, [X], np.zeros(len(times), int), W, pts, dt)
    return totals, node_means, n_clip, times


def direct_damped_response(system: FlowSystem, A: Observable, X: VectorField, eps: float,
                           T: float, dt: float, n_orbits: int, seed: int = 0,
                           warmup: float = 5.0) -> ResponseReport:
    """Monte Carlo over SRB samples of ``int_0^T e^{-eps t} (D A)(T f^t) X dt``."""
    if eps < 0:
        raise ContractViolation("damping eps must be non-negative")
    totals, node_means, n_clip, times = _autonomous(system, A, X, [0.0], [eps], T, dt,
                                                    n_orbits, seed, warmup)
    vals = totals[:, 0].real
    bm = batch_means(vals)
    return ResponseReport(
        Method.DIRECT_DAMPED, float(np.mean(vals)), batch_mean_error(bm),
        {"eps": eps, "horizon": T, "dt": dt, "n_samples": float(len(vals)),
         "n_clipped": float(n_clip), "tail_integrand": float(abs(node_means[0, -1]))},
        batch_values=bm, curve_times=times, curve=node_means[0])


def _intercept_coefficients(eps_list: Sequence[float]) -> np.ndarray:
    """Weights c with ``sum c_i R(eps_i)`` = least-squares linear intercept at eps = 0."""
    e = np.asarray(eps_list, dtype=float)
    if len(e) == 1:
        return np.ones(1)
    design = np.column_stack([np.ones_like(e), e])
    return np.linalg.pinv(design)[0]


def damped_extrapolation(system: FlowSystem, A: Observable, X: VectorField,
                         eps_list: Sequence[float], T: float, dt: float, n_orbits: int,
                         seed: int = 0, warmup: float = 5.0,
                         method: Method = Method.DIRECT_DAMPED) -> ResponseReport:
    """Linear extrapolation ``eps -> 0`` of damped integrals computed on common samples.

    For two values ``(2e, e)`` this is the Richardson combination
    ``2 R(e) - R(2e)``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e < 0 for e in eps_list):
        raise ContractViolation("damping values must be non-negative")
    totals, node_means, n_clip, times = _autonomous(system, A, X, np.zeros(len(eps_list)),
                                                    eps_list, T, dt, n_orbits, seed, warmup)
    vals = totals.real
    coef = _intercept_coefficients(eps_list)
    extrap = vals @ coef
    bm = batch_means(extrap)
    diag = {"horizon": T, "dt": dt, "n_samples": float(vals.shape[0]), "n_clipped": float(n_clip),
            "tail_integrand": float(abs(node_means[0, -1]))}
    per_eps = batch_means(vals)
    for e, col, err in zip(eps_list, vals.T, batch_mean_error(per_eps)):
        diag[f"value_eps_{e:g}"] = float(np.mean(col))
        diag[f"sigma_eps_{e:g}"] = float(err)
    diag["eps_min"] = min(eps_list)
    diag["eps_max"] = max(eps_list)
    return ResponseReport(method, float(np.mean(extrap)), batch_mean_error(bm), diag,
                          batch_values=bm, curve_times=times, curve=node_means[0])


def susceptibility_curve(system: FlowSystem, A: Observable, X: VectorField, re_omegas,
                         eps: float, T: float, dt: float, n_orbits: int, seed: int = 0,
                         warmup: float = 5.0) -> SusceptibilityCurve:
    """``chi(omega) = int_0^T e^{i omega t} <X . grad(A o f^t)> dt`` on ``omega = re + i eps``."""
    if eps <= 0:
        raise ContractViolation("susceptibility grid needs Im omega = eps > 0")
    re = np.asarray(re_omegas, dtype=float)
    totals, _, _, _ = _autonomous(system, A, X, re, np.full(len(re), eps), T, dt, n_orbits,
                                  seed, warmup)
    bm = batch_means(totals)
    sig = np.asarray(batch_mean_error(bm), dtype=float).reshape(-1)
    return SusceptibilityCurve(re + 1j * eps, totals.mean(axis=0), sig, eps, T,
                               totals.shape[0], bm)


def susceptibility_extrapolation(system, A, X, eps_list, T, dt, n_orbits, seed=0,
                                 warmup=5.0) -> ResponseReport:
    """Linear extrapolation of ``chi(i eps)`` to ``eps -> 0``."""
    return damped_extrapolation(system, A, X, eps_list, T, dt, n_orbits, seed, warmup,
                                method=Method.SUSCEPTIBILITY)


# ---------------------------------------------------------------------------
# Nonautonomous response


@dataclass
class FieldSchedule:
    """Time-dependent perturbation: ``base`` for ``tau <= t0``, ``later(tau)`` afterwards."""

    base: VectorField
    t0: float = 0.0
    later: Optional[Callable[[float], VectorField]] = None

    def field_at(self, tau: float) -> VectorField:
        if tau <= self.t0 or self.later is None:
            return self.base
        return self.later(tau)

    @classmethod
    def constant(cls, X: VectorField, t0: float = 0.0) -> "FieldSchedule":
        return cls(X, t0, None)

    @classmethod
    def switch_off(cls, X: VectorField, t0: float, dim: int = 3) -> "FieldSchedule":
        zero = ZeroField(dim)
        return cls(X, t0, lambda tau: zero)


def nonautonomous_response(system: FlowSystem, A: Observable, schedule, t_eval: float,
                           T: float, dt: float, n_orbits: int, seed: int = 0,
                           warmup: float = 5.0, probe_points: int = 16) -> ResponseReport:
    """``int_{-inf}^{t_eval} <X_tau . grad(A o f^{t_eval - tau})> dtau``, truncated at lag ``T``.

    Lags ``u`` with ``t_eval - u <= t0`` use the constant field (the
    autonomous integrand); the remaining lags use the scheduled field.  With
    a constant schedule the quadrature is identical to the undamped direct
    integral on the same samples.
    """
    if isinstance(schedule, FieldSchedule):
        sched = schedule
    else:
        raise ContractViolation("schedule must be a FieldSchedule")
    if t_eval < sched.t0:
        raise ContractViolation("t_eval must be >= t0")
    rng = np.random.default_rng(12345)
    probe = system.sample_initial(probe_points, rng)
    ref = sched.base(probe)
    for tau in sched.t0 - np.array([0.0, 0.5, 1.0, 2.0, 5.0, 10.0]):
        if not np.allclose(sched.field_at(float(tau))(probe), ref, rtol=0, atol=1e-14):
            raise ContractViolation(f"schedule is not constant before t0 (differs at tau={tau:g})")
    times = _lag_grid(T, dt)
    taus = t_eval - times
    fields: list = []
    ids: dict = {}
    node_field = np.empty(len(times), dtype=int)
    for j, tau in enumerate(taus):
        f = sched.base if tau <= sched.t0 + 1e-9 * dt else sched.field_at(float(tau))
        key = id(f)
        if key not in ids:
            ids[key] = len(fields)
            fields.append(f)
        node_field[j] = ids[key]
    W = _lag_weights(times, dt, np.zeros(1), np.zeros(1))
    pts = _prepare_samples(system, n_orbits, seed, warmup, dt)
    if A.is_constant:
        vals = np.zeros(pts.shape[0])
        n_clip = 0
    else:
        totals, _, n_clip = _lag_engine(system, A, fields, node_field, W, pts, dt)
        vals = totals[:, 0].real
    bm = batch_means(vals)
    n_auto = int(np.sum(taus <= sched.t0 + 1e-9 * dt))
    return ResponseReport(
        Method.NONAUTONOMOUS, float(np.mean(vals)), batch_mean_error(bm),
        {"t_eval": t_eval, "t0": sched.t0, "horizon": T, "dt": dt, "eps": 0.0,
         "n_samples": float(len(vals)), "autonomous_nodes": float(n_auto),
         "scheduled_nodes": float(len(times) - n_auto), "n_clipped": float(n_clip)},
        batch_values=bm)


# ---------------------------------------------------------------------------
# Split formula


def _stable_components(system, X, nodes, dt, dims, warmup, step):
    K = nodes.shape[0] - 1
    u_dim, s_dim = dims
    es = np.empty(nodes.shape + (s_dim,))
    eu = np.empty(nodes.shape + (u_dim,))
    es[0] = frame_at(system, nodes[0], warmup, step, dims).stable
    eu[K] = frame_at(system, nodes[K], warmup, step, dims).unstable
    for j in range(1, K + 1):
        _, v, _ = system.advance(nodes[j - 1], -dt, v=es[j - 1])
        es[j] = _normalize_cols(v)
    for j in range(K - 1, -1, -1):
        _, v, _ = system.advance(nodes[j + 1], dt, v=eu[j + 1])
        eu[j] = _normalize_cols(v)
    frames = []
    xs = np.empty(nodes.shape)
    for j in range(K + 1):
        fr = SplitFrame(nodes[j], eu[j], _center_of(system, nodes[j]), es[j])
        frames.append(fr)
        xs[j] = split_field(X, fr).Xs
    return xs, frames


def _center_of(system, pts):
    f = system.base_field(pts)
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def stable_shadow_term(system: FlowSystem, A: Observable, X: VectorField, T_back: float = 20.0,
                       dt: float = 0.05, n_samples: int = 2000, seed: int = 0,
                       chunk: int = 500, warmup: float = 20.0, step: float = 1.0,
                       dims: tuple[int, int] = (1, 1)) -> TermEstimate:
    """SRB average of ``(D A) V^s`` with ``V^s = int_0^T (T f^t) X^s(f^{-t} x) dt``.

    The shadow vector is accumulated from the oldest backward node forward and
    re-projected onto ``E^s`` at each node, so the unstable direction cannot
    pick up rounding errors.  A unit stable vector carried along the same
    march measures the contraction; growth means the splitting is wrong.
    """
    if not system.invertible:
        raise ContractViolation("stable_shadow_term needs an invertible system")
    rng = np.random.default_rng(seed)
    pts = system.sample_initial(n_samples, rng)
    vals = np.empty(n_samples)
    worst = -np.inf
    if A.is_constant:
        vals[:] = 0.0
    for lo in range(0, n_samples, chunk):
        if A.is_constant:
            break
        hi = min(n_samples, lo + chunk)
        p = pts[lo:hi]
        nodes = backward_nodes(system, p, T_back, dt)
        xs, frames = _stable_components(system, X, nodes, dt, dims, warmup, step)

        def project(j, q, vec, frames=frames):
            fr = frames[j]
            c = fr.coefficients(vec)
            return np.einsum("ndk,nk->nd", fr.stable, c[:, fr.u + 1:])

        vs = pullback_accumulate(system, p, xs, T_back, dt, project=project, nodes=nodes)
        vals[lo:hi] = np.einsum("nd,nd->n", A.grad(p), vs)
        # contraction of E^s over the horizon, renormalized per step so that
        # rounding cannot leak into the unstable direction
        probe = frames[-1].stable[:, :, 0]
        logs = np.zeros(hi - lo)
        for j in range(nodes.shape[0] - 1, 0, -1):
            _, probe, _ = system.advance(nodes[j], dt, v=probe)
            probe = project(j - 1, nodes[j - 1], probe)
            nrm = np.linalg.norm(probe, axis=1)
            logs += np.log(nrm)
            probe = probe / nrm[:, None]
        worst = max(worst, float(np.max(logs)))
    if worst > 0.0:
        raise SplittingQualityError(
            f"stable accumulation is not contracting (log growth {worst:.3g} over T={T_back})")
    bm = batch_means(vals)
    return TermEstimate(float(np.mean(vals)), batch_mean_error(bm),
                        {"T_back": T_back, "dt": dt, "n_samples": float(n_samples),
                         "max_log_contraction": worst if np.isfinite(worst) else 0.0},
                        bm)


def divergence_series(system: FlowSystem, X: VectorField, n_orbits: int, length: float,
                      dt: float = 0.05, stride: int = 5, seed: int = 0, warmup: float = 5.0,
                      chunk: int = 20000, A: Observable | None = None, h: float = 1e-4,
                      dims: tuple[int, int] = (1, 1), richardson: bool = False):
    """C sampled every ``stride * dt`` along ``n_orbits`` orbits; optionally A every ``dt``.

    Returns ``(c_series (n_c, n_orbits), a_series (n_steps, n_orbits) or None)``.
    """
    p = srb_samples(system, n_orbits, seed, warmup, dt)
    n_steps = int(round(length / dt))
    n_c = n_steps // stride
    c_pts = np.empty((n_c, p.shape[0], p.shape[1]))
    a_ser = None if A is None else np.empty((n_steps, p.shape[0]))
    for k in range(n_steps):
        if k % stride == 0 and k // stride < n_c:
            c_pts[k // stride] = p
        if a_ser is not None:
            a_ser[k] = A(p)
        if k < n_steps - 1:
            p, _, _ = system.advance(p, dt, dt)
    flat = c_pts.reshape(-1, p.shape[1])
    c_vals = np.empty(flat.shape[0])
    for lo in range(0, flat.shape[0], chunk):
        hi = min(flat.shape[0], lo + chunk)
        fr = frame_at(system, flat[lo:hi], dims=dims)
        c_vals[lo:hi] = estimate_divergence_C(system, X, fr, h=h, richardson=richardson).values
    return c_vals.reshape(n_c, -1), a_ser


def rho_of_C(c_series: np.ndarray, n_batches: int = N_BATCHES,
             pooled: bool = False) -> tuple[float, float]:
    """Birkhoff mean of C with batch-means error (batches along time).

    With ``pooled`` every orbit contributes its own ``n_batches`` batch means,
    which sharpens the error estimate when several orbits are available.
    """
    bm = batch_means(c_series, n_batches)
    bm = bm.reshape(-1) if pooled else bm.mean(axis=1)
    return float(np.mean(c_series)), batch_mean_error(bm)


def unstable_center_term(system: FlowSystem, A: Observable, c_series: np.ndarray,
                         a_series: np.ndarray, stride: int, dt: float, eps: float = 0.0,
                         T: float = 4.0, tail_tol: float = 1e-3,
                         n_batches: int = N_BATCHES) -> TermEstimate:
    """``-int_0^T e^{-eps t} (<(A o f^t) C> - <A><C>) dt`` from orbit time series.

    ``c_series[i]`` is C at time ``i * stride * dt`` and ``a_series[k]`` is A at
    time ``k * dt`` on the same orbits.
    """
    if eps < 0:
        raise ContractViolation("eps must be non-negative")
    rc, rc_sig = rho_of_C(c_series, n_batches)
    rc_ok = abs(rc) <= 3 * rc_sig + 1e-10
    if not rc_ok:
        warnings.warn(f"rho(C) = {rc:.3e} is not within 3 sigma ({rc_sig:.2e}) of zero")
    if A.is_constant:
        return TermEstimate(0.0, 0.0, {"rho_C": rc, "rho_C_sigma": rc_sig,
                                       "rho_C_ok": float(rc_ok), "horizon": T, "eps": eps})
    K = int(round(T / dt))
    n_steps = a_series.shape[0]
    n_use = (n_steps - 1 - K) // stride + 1
    n_use = min(n_use, c_series.shape[0])
    if n_use < n_batches:
        raise ContractViolation("orbits too short for the requested correlation horizon")
    c = c_series[:n_use]
    a_mean = float(np.mean(a_series))
    c_mean = float(np.mean(c))
    w = _quadrature_weights(K, dt, rule="trapezoid") * np.exp(-eps * np.arange(K + 1) * dt)
    idx = np.arange(n_use) * stride
    # per C-sample lag integral of (A(t + lag) - <A>) (C - <C>)
    lagint = np.zeros_like(c)
    for j in range(K + 1):
        lagint += w[j] * (a_series[idx + j] - a_mean)
    prod = -lagint * (c - c_mean)
    size = n_use // n_batches
    bm = prod[:size * n_batches].reshape(n_batches, size, -1).mean(axis=(1, 2))
    corr_tail = float(abs(np.mean((a_series[idx + K] - a_mean) * (c - c_mean))))
    diag = {"rho_C": rc, "rho_C_sigma": rc_sig, "rho_C_ok": float(rc_ok), "horizon": T,
            "eps": eps, "tail_correlation": corr_tail,
            "n_pairs": float(c.size)}
    if corr_tail > tail_tol:
        diag["tail_warning"] = 1.0
    return TermEstimate(float(np.mean(prod[:size * n_batches])), batch_mean_error(bm), diag, bm)


def theoremB_response(system: FlowSystem, A: Observable, X: VectorField, *,
                      T_back: float = 20.0, dt: float = 0.05, n_shadow: int = 2000,
                      n_orbits: int = 20, orbit_length: float = 1000.0, stride: int = 5,
                      corr_T: float = 4.0, eps: float = 0.0, seed: int = 0) -> ResponseReport:
    """Split formula: stable shadow term plus the C-correlation term."""
    if not system.invertible:
        raise ContractViolation("the split formula is implemented for invertible testbeds")
    st = stable_shadow_term(system, A, X, T_back, dt, n_shadow, seed)
    c_ser, a_ser = divergence_series(system, X, n_orbits, orbit_length, dt, stride,
                                     seed + 1, A=A)
    uc = unstable_center_term(system, A, c_ser, a_ser, stride, dt, eps, corr_T)
    value = st.value + uc.value
    se = float(np.hypot(st.std_error, uc.std_error))
    diag = {"stable_term": st.value, "stable_sigma": st.std_error,
            "unstable_center_term": uc.value, "unstable_center_sigma": uc.std_error,
            "T_back": T_back, "horizon": corr_T, "eps": eps, "dt": dt}
    diag.update({k: v for k, v in uc.diagnostics.items() if k.startswith("rho_C")})
    return ResponseReport(Method.THEOREM_B, float(value), se, diag,
                          inconclusive=bool(se > abs(value)))
