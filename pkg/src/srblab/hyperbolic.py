"""Hyperbolic splitting along orbits, field decomposition, and the cu-divergence C."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fields import VectorField
from .flow_core import ChartError, ContractViolation, FlowSystem, Trajectory, _apply


class ConditioningError(RuntimeError):
    def __init__(self, min_angle: float):
        self.min_angle = float(min_angle)
        super().__init__(f"splitting is ill-conditioned: minimum angle {self.min_angle:.3e} rad")


class UnsupportedDimension(ValueError):
    pass


def _qr_pos(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched reduced QR with non-negative diagonal of R."""
    q, r = np.linalg.qr(a)
    sgn = np.sign(np.diagonal(r, axis1=-2, axis2=-1)).copy()
    sgn[sgn == 0] = 1.0
    return q * sgn[..., None, :], r * sgn[..., :, None]


def _normalize_cols(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-2, keepdims=True)


def _block_angle(block: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Smallest angle between span(block) and span(others), batched."""
    q, _ = np.linalg.qr(others)
    qb, _ = np.linalg.qr(block)
    resid = qb - q @ (np.swapaxes(q, -1, -2) @ qb)
    sv = np.linalg.svd(resid, compute_uv=False)
    return np.arcsin(np.clip(sv[..., -1], 0.0, 1.0))


@dataclass
class SplitFrame:
    """Covariant frame ``E^u + E^c + E^s`` at a set of points.

    ``unstable`` has shape ``(n, d, u)``, ``stable`` ``(n, d, s)`` and
    ``center`` ``(n, d)``; all columns have unit length.
    """

    points: np.ndarray
    unstable: np.ndarray
    center: np.ndarray
    stable: np.ndarray
    exponents: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    system_key: str = ""

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def u(self) -> int:
        return self.unstable.shape[2]

    @property
    def s(self) -> int:
        return self.stable.shape[2]

    @property
    def basis(self) -> np.ndarray:
        return np.concatenate([self.unstable, self.center[:, :, None], self.stable], axis=2)

    def coefficients(self, vectors: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.basis, vectors[..., None])[..., 0]

    def projectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        b = self.basis
        binv = np.linalg.inv(b)
        u = self.u
        pu = b[:, :, :u] @ binv[:, :u, :]
        pc = b[:, :, u:u + 1] @ binv[:, u:u + 1, :]
        ps = b[:, :, u + 1:] @ binv[:, u + 1:, :]
        return pu, pc, ps

    def min_angles(self) -> np.ndarray:
        b = self.basis
        u = self.u
        blocks = [(slice(0, u), np.r_[u:b.shape[2]]),
                  (slice(u, u + 1), np.r_[0:u, u + 1:b.shape[2]]),
                  (slice(u + 1, b.shape[2]), np.r_[0:u + 1])]
        return np.min([_block_angle(b[:, :, sl], b[:, :, oth]) for sl, oth in blocks], axis=0)

    def check_conditioning(self, tol: float = 1e-6) -> float:
        m = float(np.min(self.min_angles()))
        if not np.isfinite(m) or m < tol:
            raise ConditioningError(m)
        return m

    def subset(self, idx) -> "SplitFrame":
        return SplitFrame(self.points[idx], self.unstable[idx], self.center[idx], self.stable[idx],
                          self.exponents, None if self.times is None else self.times[idx],
                          self.system_key)

    def transported(self, system: FlowSystem, t: float, dt: float | None = None) -> "SplitFrame":
        """Frame at ``f^t`` of the points, obtained by covariance of the splitting."""
        q, bu, _ = system.advance(self.points, t, dt, v=self.unstable)
        _, bs, _ = system.advance(self.points, t, dt, v=self.stable)
        return SplitFrame(q, _normalize_cols(bu), _center(system, q), _normalize_cols(bs),
                          self.exponents, None, self.system_key)

    def to_csv_rows(self):
        ang = self.min_angles()
        times = self.times if self.times is not None else np.arange(self.n, dtype=float)
        for i in range(self.n):
            row = [float(times[i])] + [float(c) for c in self.points[i]]
            row += [float(c) for c in self.unstable[i, :, 0]] + [float(c) for c in self.stable[i, :, 0]]
            yield row + [float(ang[i])]


def _center(system: FlowSystem, pts: np.ndarray) -> np.ndarray:
    f = system.base_field(pts)
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def tangent_maps(system: FlowSystem, points: np.ndarray, dt: float, chunk: int = 20000) -> np.ndarray:
    """``T_{p_i} f^{dt}`` for every row of ``points``."""
    n, d = points.shape
    out = np.empty((n, d, d))
    eye = np.eye(d)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        v = np.broadcast_to(eye, (hi - lo, d, d)).copy()
        _, out[lo:hi], _ = system.advance(points[lo:hi], dt, dt, v=v)
    return out


def _split_dims(exponents: np.ndarray) -> tuple[int, int]:
    i0 = int(np.argmin(np.abs(exponents)))
    return i0, len(exponents) - i0 - 1


def compute_clv(system: FlowSystem, traj: Trajectory, warmup: float = 200.0,
                angle_tol: float = 1e-8) -> SplitFrame:
    """Covariant splitting on the interior of a single uniformly sampled orbit.

    The forward QR sweep yields ``E^u`` as the span of the leading forward
    vectors; the sweep with inverse tangent maps from the far end yields
    ``E^s``.  Samples within ``warmup`` of either end are discarded.
    """
    if traj.system_key != system.key:
        raise ContractViolation("trajectory was produced by a different system")
    if traj.is_batch:
        raise ContractViolation("compute_clv expects a single orbit")
    pts, dt = traj.points, traj.dt
    n, d = pts.shape
    steps = np.diff(traj.times)
    if not np.allclose(steps, dt, rtol=0, atol=1e-9 * max(dt, 1.0)):
        raise ContractViolation("compute_clv needs uniformly spaced samples")
    nw = int(round(warmup / dt))
    if n <= 2 * nw + 1:
        raise ContractViolation(
            f"trajectory too short: {n} samples, warmup needs more than {2 * nw + 1}")
    tm = tangent_maps(system, pts[:-1], dt)
    tinv = np.linalg.inv(tm)

    # generic start vectors: coordinate axes can be exactly invariant (unit roof)
    start = _qr_pos(_seed_block(d, d)[None])[0][0]
    qf = np.empty((n, d, d))
    q = start
    qf[0] = q
    logs = np.zeros(d)
    for i in range(n - 1):
        q, r = _qr_pos(tm[i] @ q)
        qf[i + 1] = q
        if i >= nw:
            logs += np.log(np.abs(np.diag(r)))
    exps = logs / ((n - 1 - nw) * dt)
    i0, s_dim = _split_dims(exps)
    u_dim = i0

    qb = np.empty((n, d, d))
    q = start
    qb[-1] = q
    for i in range(n - 1, 0, -1):
        q, _ = _qr_pos(tinv[i - 1] @ q)
        qb[i - 1] = q

    sl = slice(nw, n - nw)
    frame = SplitFrame(pts[sl].copy(), qf[sl, :, :u_dim].copy(), _center(system, pts[sl]),
                       qb[sl, :, :s_dim].copy(), exps, traj.times[sl].copy(), system.key)
    frame.check_conditioning(angle_tol)
    return frame


def _seed_block(d: int, k: int) -> np.ndarray:
    # fixed generic start vectors; any choice avoiding the complement works
    m = np.arange(1, d * d + 1, dtype=float).reshape(d, d) ** 0.5
    m = m + np.diag(np.linspace(1.0, 2.0, d))
    q, _ = np.linalg.qr(m)
    return q[:, :k]


def frame_at(system: FlowSystem, points, warmup: float = 20.0, step: float = 1.0,
             dims: tuple[int, int] = (1, 1), chunk: int = 20000) -> SplitFrame:
    """Covariant frame at arbitrary points of an invertible system.

    ``E^u`` is obtained by a forward orthonormalized sweep starting ``warmup``
    time units in the past, ``E^s`` by a sweep with inverse maps starting
    ``warmup`` in the future.  Orbit nodes are computed directly from the
    target points, so the sweeps never re-integrate through unstable
    directions.
    """
    if not system.invertible:
        raise ChartError("frame_at needs an invertible system (exact backward flow)")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    u_dim, s_dim = dims
    if u_dim + s_dim + 1 != d:
        raise UnsupportedDimension(f"dims {dims} incompatible with phase dimension {d}")
    k = max(int(round(warmup / step)), 1)
    eu = np.empty((n, d, u_dim))
    es = np.empty((n, d, s_dim))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        p = pts[lo:hi]
        m = hi - lo
        q = np.broadcast_to(_seed_block(d, u_dim), (m, d, u_dim)).copy()
        for j in range(k, 0, -1):
            node, _, _ = system.advance(p, -j * step)
            _, q, _ = system.advance(node, step, v=q)
            q, _ = _qr_pos(q)
        eu[lo:hi] = q
        q = np.broadcast_to(_seed_block(d, s_dim), (m, d, s_dim)).copy()
        for j in range(k, 0, -1):
            node, _, _ = system.advance(p, j * step)
            _, q, _ = system.advance(node, -step, v=q)
            q, _ = _qr_pos(q)
        es[lo:hi] = q
    return SplitFrame(pts.copy(), eu, _center(system, pts), es, None, None, system.key)


@dataclass
class FieldSplit:
    Xc: np.ndarray
    Xs: np.ndarray
    Xu: np.ndarray
    eta: np.ndarray


def split_field(X, frame: SplitFrame, angle_tol: float = 1e-8,
                base_field: VectorField | None = None) -> FieldSplit:
    """Oblique decomposition ``X = X^c + X^s + X^u`` with ``X^c = eta * base field``."""
    frame.check_conditioning(angle_tol)
    vals = X(frame.points) if callable(X) else np.asarray(X, dtype=float)
    coef = frame.coefficients(vals)
    u = frame.u
    xu = np.einsum("ndk,nk->nd", frame.unstable, coef[:, :u])
    xc = frame.center * coef[:, u:u + 1]
    xs = np.einsum("ndk,nk->nd", frame.stable, coef[:, u + 1:])
    if base_field is not None:
        speed = np.linalg.norm(base_field(frame.points), axis=1)
    else:
        speed = 1.0
    return FieldSplit(xc, xs, xu, coef[:, u] / speed)


@dataclass
class DivergenceSamples:
    values: np.ndarray
    h: float
    from_center: np.ndarray
    from_unstable: np.ndarray
    points: np.ndarray
    richardson_delta: Optional[float] = None
    noise_estimate: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def tags(self) -> tuple[str, str]:
        return ("from-X^c", "from-X^u")

    def to_csv_rows(self):
        for i in range(len(self.values)):
            yield [i, float(self.values[i]), float(self.from_center[i]), float(self.from_unstable[i])]


def _eta(system, frame: SplitFrame, X) -> np.ndarray:
    coef = frame.coefficients(X(frame.points))
    return coef[:, frame.u] / np.linalg.norm(system.base_field(frame.points), axis=1)


def _seam_safe_times(system, p: np.ndarray, t0: float) -> np.ndarray:
    """Backward times near ``t0`` whose endpoints sit at half roof height."""
    roof = getattr(system, "roof", None)
    if roof is None:
        return np.full(p.shape[0], t0)
    q, _, _ = system.advance(p, -t0)
    return t0 + q[:, 2] - 0.5 * roof(q[:, :2])


def _unstable_part(system, X, frame, uhat, alpha_p, h, jac_time, warmup, step):
    n, d = frame.points.shape
    p = frame.points
    tback = _seam_safe_times(system, p, jac_time)
    eye = np.broadcast_to(np.eye(d), (n, d, d))
    dalpha = np.zeros(n)
    dlogj = np.zeros(n)
    for sign in (1.0, -1.0):
        q_ext = p + sign * h * uhat
        q_can, jac = system.canonicalize(q_ext, eye.copy())
        fr = frame_at(system, q_can, warmup, step, (frame.u, frame.s))
        jinv = np.linalg.inv(jac)
        u_ext = np.einsum("nij,nj->ni", jinv, fr.unstable[:, :, 0])
        scale = np.linalg.norm(u_ext, axis=1)
        orient = np.sign(np.einsum("ni,ni->n", u_ext, uhat))
        coef = fr.coefficients(X(q_can))[:, 0]
        alpha_ext = coef * scale * orient
        # backward unstable Jacobian as the reciprocal of the forward one from
        # the past endpoint (pushing E^u backward would amplify rounding)
        q_back = q_ext.copy()
        q_back[:, 2] -= tback
        z, _ = system.canonicalize(q_back)
        fz = frame_at(system, z, warmup, step, (frame.u, frame.s))
        _, w, _ = system.advance(z, tback, v=fz.unstable[:, :, 0])
        logj = -np.log(np.linalg.norm(np.einsum("nij,nj->ni", jinv, w), axis=1))
        dalpha += sign * alpha_ext
        dlogj += sign * logj
    return dalpha / (2 * h) + alpha_p * dlogj / (2 * h)


def estimate_divergence_C(system: FlowSystem, X, frame: SplitFrame, h: float = 1e-4,
                          jac_time: float = 15.0, delta: float = 0.0025, warmup: float = 20.0,
                          step: float = 1.0, richardson: bool = True) -> DivergenceSamples:
    """Samples of ``C = div^cu_v (X^c + X^u)`` at the frame points (one unstable direction).

    The center part is the time derivative of ``eta`` along the orbit (fourth
    order central differences with spacing ``delta``, frames moved by
    covariance).  The unstable part central-differences the unstable
    coefficient at ``p +- h u`` and adds the log-derivative of the backward
    unstable Jacobian over ``jac_time``, which realizes the conditional
    density on unstable leaves.
    """
    if frame.u != 1:
        raise UnsupportedDimension(f"divergence estimator needs u = 1, got u = {frame.u}")
    if not system.invertible:
        raise ChartError("divergence estimator needs an invertible system")
    frame.check_conditioning()
    warn = []
    eta_k = {}
    for k in (-2, -1, 1, 2):
        eta_k[k] = _eta(system, frame.transported(system, k * delta), X)
    deta = (-eta_k[2] + 8 * eta_k[1] - 8 * eta_k[-1] + eta_k[-2]) / (12 * delta)

    uhat = frame.unstable[:, :, 0]
    alpha_p = frame.coefficients(X(frame.points))[:, 0]
    unst = _unstable_part(system, X, frame, uhat, alpha_p, h, jac_time, warmup, step)
    rich = None
    if richardson:
        unst2 = _unstable_part(system, X, frame, uhat, alpha_p, h / 2, jac_time, warmup, step)
        rich = float(np.max(np.abs(unst - unst2))) if unst.size else 0.0
    scale = float(np.max(np.abs(alpha_p))) if alpha_p.size else 0.0
    noise = 1e-15 * max(scale, 1.0) / h
    if h < 1e-6 or (rich is not None and rich > 1e-4 * max(scale, 1.0)):
        warn.append(f"h={h:g} may be below the frame-noise floor (noise ~ {noise:.2e})")
        warnings.warn(warn[-1])
    return DivergenceSamples(deta + unst, h, deta, unst, frame.points.copy(), rich, noise, warn)
