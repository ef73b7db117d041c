"""Phase spaces, parametrized flows, orbits and tangent propagation.

Two families of testbeds are provided:

* :class:`CatSuspension` -- the suspension of the cat automorphism
  ``M = [[2, 1], [1, 1]]`` under a positive roof ``psi``.  Chart points are
  ``(x1, x2, s)`` with ``x`` in the unit torus and ``0 <= s < psi(x)``; the
  base field is the unit vertical field and ``(x, psi(x))`` is glued to
  ``(M x mod 1, 0)``.  For ``a = 0`` the flow is evaluated exactly.
* :class:`CustomOde` (and the :func:`lorenz63` preset) -- an ODE on ``R^d``
  integrated with fixed-step classical RK4.

Every routine is vectorized over a batch of points of shape ``(n, d)``.
Tangent vectors are carried as arrays of shape ``(n, d)`` or ``(n, d, k)``.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _accel
from .fields import (FunctionField, Roof, VectorField, VerticalField, ZeroField,
                     lorenz_field, lorenz_rho_field)

CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INV = np.array([[1.0, -1.0], [-1.0, 2.0]])
GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
CAT_EXPANSION = (3.0 + np.sqrt(5.0)) / 2.0


class IntegrationDiverged(RuntimeError):
    def __init__(self, time: float, message: str = ""):
        self.time = float(time)
        super().__init__(message or f"integration diverged at t={self.time:.6g}")


class ContractViolation(ValueError):
    pass


class ChartError(RuntimeError):
    pass


class SystemKind(str, enum.Enum):
    CAT_SUSPENSION = "CatSuspension"
    LORENZ63 = "Lorenz63"
    CUSTOM_ODE = "CustomOde"


def _wrap_unit(x: np.ndarray) -> np.ndarray:
    x = x - np.floor(x)
    x[x >= 1.0] -= 1.0
    return x


def _apply(mat: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched ``mat @ v`` for v of shape (n, d) or (n, d, k)."""
    if v.ndim == 2:
        return np.einsum("nij,nj->ni", mat, v)
    return np.einsum("nij,njk->nik", mat, v)


@dataclass(frozen=True)
class CrossingEvent:
    time: float
    orbit: int
    before: np.ndarray
    after: np.ndarray


class FlowSystem:
    """Flow of ``base_field + a * perturbation`` on a concrete chart."""

    kind: SystemKind
    dim: int

    def __init__(self, base_field: VectorField, perturbation: Optional[VectorField], a: float):
        self.base_field = base_field
        self.perturbation = perturbation if perturbation is not None else ZeroField(self.dim)
        self.a = float(a)

    # -- fields -----------------------------------------------------------
    def field(self, p: np.ndarray) -> np.ndarray:
        out = self.base_field(p)
        if self.a != 0.0:
            out = out + self.a * self.perturbation(p)
        return out

    def field_jacobian(self, p: np.ndarray) -> np.ndarray:
        out = self.base_field.jacobian(p)
        if self.a != 0.0:
            out = out + self.a * self.perturbation.jacobian(p)
        return out

    # -- variants ---------------------------------------------------------
    def with_parameter(self, a: float) -> "FlowSystem":
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.a = float(a)
        return new

    def with_perturbation(self, X: VectorField) -> "FlowSystem":
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.perturbation = X
        return new

    @property
    def key(self) -> str:
        h = hashlib.sha1(repr((self.kind.value, self.dim, self._key_data(), self.a,
                               id(self.perturbation))).encode())
        return h.hexdigest()[:16]

    def _key_data(self):
        return ()

    @property
    def invertible(self) -> bool:
        return False

    # -- integration ------------------------------------------------------
    def advance(self, p, t: float, dt: float | None = None, v=None, events: bool = False,
                t0: float = 0.0, strict: bool = True):
        """Flow a batch of points for time ``t``.

        Returns ``(points, vectors, events)``; ``vectors`` is None unless ``v``
        was given, ``events`` is a list of :class:`CrossingEvent` (empty for
        systems without crossings or when not requested).  With
        ``strict=False`` non-finite rows are returned instead of raising.
        """
        raise NotImplementedError

    def canonicalize(self, p, v=None):
        """Map chart coordinates to the fundamental domain (identity for ODEs)."""
        p = np.array(p, dtype=float)
        return p, (None if v is None else np.array(v, dtype=float))

    def transport_matrix(self, p):
        """Canonical points and the tangent transport from ``p``'s chart."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        eye = np.broadcast_to(np.eye(self.dim), (p.shape[0], self.dim, self.dim)).copy()
        return self.canonicalize(p, eye)

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Cat-map suspension


class CatSuspension(FlowSystem):
    kind = SystemKind.CAT_SUSPENSION
    dim = 3

    def __init__(self, roof: Roof | None = None, perturbation: VectorField | None = None,
                 a: float = 0.0):
        self.roof = roof if roof is not None else Roof.default()
        super().__init__(VerticalField(1.0), perturbation, a)

    use_accel = True

    def _key_data(self):
        return (self.roof,)

    def _packed(self):
        if not _accel.HAVE_NUMBA:
            return None
        cache = self.__dict__.get("_packed_cache")
        if cache is not None and cache[0] is self.perturbation and cache[1] == self.a:
            return cache[2]
        pert = _accel.pack_perturbation(self.perturbation, self.roof)
        packed = None
        if pert is not None:
            vert, fc, famp, fk, fph = pert
            base, ramp, rk, rph = _accel.pack_roof(self.roof)
            packed = (1.0 + self.a * vert, self.a, base, ramp, rk, rph, fc, famp, fk, fph)
        self.__dict__["_packed_cache"] = (self.perturbation, self.a, packed)
        return packed

    @property
    def invertible(self) -> bool:
        return self.a == 0.0

    # crossing derivative (x, psi(x)) -> (M x, 0)
    def crossing_jacobian(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        dg = np.zeros((n, 3, 3))
        dg[:, :2, :2] = CAT
        dg[:, 2, :2] = -self.roof.grad(x)
        dg[:, 2, 2] = 1.0
        return dg

    def inverse_crossing_jacobian(self, x_prev: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`crossing_jacobian` evaluated at the pre-image ``x_prev``."""
        n = x_prev.shape[0]
        dg = np.zeros((n, 3, 3))
        dg[:, :2, :2] = CAT_INV
        dg[:, 2, :2] = self.roof.grad(x_prev) @ CAT_INV
        dg[:, 2, 2] = 1.0
        return dg

    def canonicalize(self, p, v=None, events=None, t_final=None, t0=0.0):
        p = np.array(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        v = None if v is None else np.array(v, dtype=float)
        if v is not None and single:
            v = v[None]
        x, s = p[:, :2].copy(), p[:, 2].copy()
        x = _wrap_unit(x)
        while True:
            psi = self.roof(x)
            up = np.nonzero(s >= psi)[0]
            if up.size == 0:
                break
            xu = x[up]
            if v is not None:
                v[up] = _apply(self.crossing_jacobian(xu), v[up])
            s[up] -= psi[up]
            x_new = _wrap_unit(xu @ CAT.T)
            if events is not None:
                for j, i in enumerate(up):
                    events.append(CrossingEvent(
                        t0 + t_final - s[i], int(i),
                        np.array([xu[j, 0], xu[j, 1], psi[i]]),
                        np.array([x_new[j, 0], x_new[j, 1], 0.0])))
            x[up] = x_new
        while True:
            down = np.nonzero(s < 0.0)[0]
            if down.size == 0:
                break
            x_prev = _wrap_unit(x[down] @ CAT_INV.T)
            if v is not None:
                v[down] = _apply(self.inverse_crossing_jacobian(x_prev), v[down])
            s[down] += self.roof(x_prev)
            x[down] = x_prev
        out = np.column_stack([x, s])
        if single:
            out = out[0]
            v = None if v is None else v[0]
        return out, v

    # -- integration --------------------------------------------------------
    def advance(self, p, t, dt=None, v=None, events=False, t0=0.0, strict=True):
        p = np.array(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        if v is not None:
            v = np.array(v, dtype=float)
            if single:
                v = v[None]
        evs: list = [] if events else None
        if self.a == 0.0:
            q = p.copy()
            q[:, 2] += t
            q, v = self.canonicalize(q, v, events=evs, t_final=t, t0=t0)
        else:
            if t < 0:
                raise ChartError("backward integration of the perturbed suspension is not supported")
            if dt is None:
                raise ValueError("dt is required for the perturbed suspension")
            packed = self._packed() if (v is None and evs is None and self.use_accel) else None
            if packed is not None:
                q = _accel.advance_batch(p, float(t), float(dt), *packed)
                if strict and not np.all(np.isfinite(q)):
                    raise IntegrationDiverged(t0 + t)
            else:
                q, v = self._advance_rk4(p, t, dt, v, evs, t0, strict)
        if single:
            q = q[0]
            v = None if v is None else v[0]
        return q, v, (evs if evs is not None else [])

    def _rk4(self, p, h, v=None):
        hh = h[:, None]
        k1 = self.field(p)
        p2 = p + 0.5 * hh * k1
        k2 = self.field(p2)
        p3 = p + 0.5 * hh * k2
        k3 = self.field(p3)
        p4 = p + hh * k3
        k4 = self.field(p4)
        out = p + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if v is None:
            return out, None
        hv = h.reshape((-1,) + (1,) * (v.ndim - 1))
        K1 = _apply(self.field_jacobian(p), v)
        K2 = _apply(self.field_jacobian(p2), v + 0.5 * hv * K1)
        K3 = _apply(self.field_jacobian(p3), v + 0.5 * hv * K2)
        K4 = _apply(self.field_jacobian(p4), v + hv * K3)
        return out, v + hv / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)

    def _saltation(self, xc: np.ndarray, p_after: np.ndarray) -> np.ndarray:
        n = xc.shape[0]
        before = np.column_stack([xc, self.roof(xc)])
        dg = self.crossing_jacobian(xc)
        f_minus = self.field(before)
        f_plus = self.field(p_after)
        grad_g = np.concatenate([-self.roof.grad(xc), np.ones((n, 1))], axis=1)
        denom = np.einsum("ni,ni->n", grad_g, f_minus)
        mismatch = f_plus - np.einsum("nij,nj->ni", dg, f_minus)
        return dg + mismatch[:, :, None] * grad_g[:, None, :] / denom[:, None, None]

    def _step(self, p, h, v, evs, t_now, strict=True):
        rem = np.full(p.shape[0], float(h))
        p = p.copy()
        v = None if v is None else v.copy()
        for _ in range(1000):
            idx = np.nonzero(rem > 0.0)[0]
            if idx.size == 0:
                break
            pi, hi = p[idx], rem[idx]
            vi = None if v is None else v[idx]
            pt, vt = self._rk4(pi, hi, vi)
            g1 = pt[:, 2] - self.roof(pt[:, :2])
            ok = g1 < 0.0
            if np.any(ok):
                sel = idx[ok]
                q = pt[ok]
                q[:, :2] = _wrap_unit(q[:, :2])
                p[sel] = q
                if v is not None:
                    v[sel] = vt[ok]
                rem[sel] = 0.0
            cross = ~ok
            if not np.any(cross):
                continue
            sel = idx[cross]
            pc0, hc = pi[cross], hi[cross]
            g0 = pc0[:, 2] - self.roof(pc0[:, :2])
            theta = hc * (-g0) / (g1[cross] - g0)
            for _ in range(8):
                pth, _ = self._rk4(pc0, theta)
                g = pth[:, 2] - self.roof(pth[:, :2])
                f = self.field(pth)
                gp = f[:, 2] - np.einsum("ni,ni->n", self.roof.grad(pth[:, :2]), f[:, :2])
                step = g / gp
                theta = np.clip(theta - step, 0.0, hc)
                if np.max(np.abs(step)) < 1e-15:
                    break
            pth, vth = self._rk4(pc0, theta, None if v is None else v[sel])
            xc = pth[:, :2]
            after = np.column_stack([_wrap_unit(xc @ CAT.T), np.zeros(len(sel))])
            if v is not None:
                v[sel] = _apply(self._saltation(xc, after), vth)
            if evs is not None:
                for j, i in enumerate(sel):
                    evs.append(CrossingEvent(
                        t_now + (h - rem[i]) + theta[j], int(i),
                        np.array([xc[j, 0], xc[j, 1], self.roof(xc[j:j + 1])[0]]),
                        after[j].copy()))
            p[sel] = after
            rem[sel] = hc - theta
        if strict and not np.all(np.isfinite(p)):
            raise IntegrationDiverged(t_now + h)
        return p, v

    def _advance_rk4(self, p, t, dt, v, evs, t0, strict=True):
        n_steps = max(int(np.ceil(t / dt - 1e-9)), 0)
        done = 0.0
        for k in range(n_steps):
            h = min(dt, t - done)
            p, v = self._step(p, h, v, evs, t0 + done, strict)
            done += h
        return p, v

    def sample_initial(self, n, rng):
        out = np.empty((n, 3))
        filled = 0
        top = self.roof.upper_bound
        while filled < n:
            m = 2 * (n - filled) + 16
            x = rng.random((m, 2))
            s = rng.random(m) * top
            keep = s < self.roof(x)
            cand = np.column_stack([x[keep], s[keep]])
            take = min(n - filled, cand.shape[0])
            out[filled:filled + take] = cand[:take]
            filled += take
        return out

    def chart_volume(self) -> float:
        """Area under the roof, computed with a tensor trapezoid rule (exact for trig roofs)."""
        g = (np.arange(64) + 0.0) / 64
        xx = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        return float(np.mean(self.roof(xx)))


# ---------------------------------------------------------------------------
# ODE testbeds


class CustomOde(FlowSystem):
    kind = SystemKind.CUSTOM_ODE

    def __init__(self, base_field: VectorField, dim: int, perturbation=None, a: float = 0.0,
                 box: tuple[np.ndarray, np.ndarray] | None = None, name: str = "custom"):
        self.dim = dim
        self.box = box if box is not None else (-np.ones(dim), np.ones(dim))
        self.name = name
        super().__init__(base_field, perturbation, a)

    def _key_data(self):
        return (self.name, id(self.base_field))

    def _rk4(self, p, h, v=None):
        k1 = self.field(p)
        p2 = p + 0.5 * h * k1
        k2 = self.field(p2)
        p3 = p + 0.5 * h * k2
        k3 = self.field(p3)
        p4 = p + h * k3
        k4 = self.field(p4)
        out = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if v is None:
            return out, None
        K1 = _apply(self.field_jacobian(p), v)
        K2 = _apply(self.field_jacobian(p2), v + 0.5 * h * K1)
        K3 = _apply(self.field_jacobian(p3), v + 0.5 * h * K2)
        K4 = _apply(self.field_jacobian(p4), v + h * K3)
        return out, v + h / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)

    def advance(self, p, t, dt=None, v=None, events=False, t0=0.0, strict=True):
        if dt is None:
            raise ValueError("dt is required for ODE systems")
        p = np.array(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        if v is not None:
            v = np.array(v, dtype=float)
            if single:
                v = v[None]
        sign = 1.0 if t >= 0 else -1.0
        n_steps = max(int(np.ceil(abs(t) / dt - 1e-9)), 0)
        done = 0.0
        for k in range(n_steps):
            h = min(dt, abs(t) - done)
            p, v = self._rk4(p, sign * h, v)
            done += h
            if strict and not np.all(np.isfinite(p)):
                raise IntegrationDiverged(t0 + sign * done)
        if single:
            p = p[0]
            v = None if v is None else v[0]
        return p, v, []

    def sample_initial(self, n, rng):
        lo, hi = self.box
        return lo + (hi - lo) * rng.random((n, self.dim))


class Lorenz63(CustomOde):
    kind = SystemKind.LORENZ63

    def __init__(self, sigma=10.0, rho=28.0, beta=8.0 / 3.0, perturbation=None, a=0.0):
        self.params = (sigma, rho, beta)
        box = (np.array([-20.0, -25.0, 5.0]), np.array([20.0, 25.0, 45.0]))
        super().__init__(lorenz_field(sigma, rho, beta), 3,
                         perturbation if perturbation is not None else lorenz_rho_field(),
                         a, box=box, name="lorenz63")

    def _key_data(self):
        return ("lorenz63",) + self.params


def lorenz63(**kw) -> Lorenz63:
    return Lorenz63(**kw)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass
class Trajectory:
    """Samples of one orbit (points ``(n, d)``) or a batch (points ``(n, m, d)``)."""

    times: np.ndarray
    points: np.ndarray
    dt: float
    seed: Optional[int]
    system_key: str
    events: list = field(default_factory=list)

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.points))

    @property
    def is_batch(self) -> bool:
        return self.points.ndim == 3

    def to_csv_rows(self):
        pts = self.points if not self.is_batch else self.points[:, 0, :]
        for t, p in zip(self.times, pts):
            yield [float(t)] + [float(c) for c in p]


def _time_grid(T: float, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    if T < 0:
        raise ContractViolation("T must be non-negative")
    n = int(np.ceil(T / dt - 1e-9))
    times = np.minimum(np.arange(n + 1) * dt, T)
    return times


def integrate_orbit(system: FlowSystem, p0, T: float, dt: float,
                    seed: Optional[int] = None, record_events: bool = True) -> Trajectory:
    """Sample ``f_a^t p0`` on ``[0, T]`` with spacing ``dt``.

    ``p0`` may be a single point ``(d,)`` or a batch ``(m, d)``.  Suspension
    crossings are resolved exactly and recorded as :class:`CrossingEvent`.
    """
    times = _time_grid(T, dt)
    p = np.array(p0, dtype=float)
    if p.shape[-1] != system.dim:
        raise ContractViolation(f"point has dimension {p.shape[-1]}, system has {system.dim}")
    if not np.all(np.isfinite(p)):
        raise IntegrationDiverged(0.0, "initial point is not finite")
    p, _ = system.canonicalize(p)
    pts = np.empty((len(times),) + p.shape)
    pts[0] = p
    events: list = []
    for i in range(1, len(times)):
        h = times[i] - times[i - 1]
        if abs(h - dt) <= 1e-9 * dt:
            h = dt  # same step as tangent_maps, so crossings are decided identically
        p, _, ev = system.advance(p, h, dt, events=record_events, t0=times[i - 1])
        if not np.all(np.isfinite(p)):
            raise IntegrationDiverged(times[i])
        pts[i] = p
        events.extend(ev)
    return Trajectory(times, pts, dt, seed, system.key, events)


def tangent_propagate(system: FlowSystem, traj: Trajectory, v0) -> np.ndarray:
    """Return ``(T_{p0} f^t) v0`` at every sample of ``traj``.

    ``v0`` is a vector ``(d,)``, a batch ``(m, d)`` matching a batch
    trajectory, or a matrix of column vectors ``(d, k)``.
    """
    if traj.system_key != system.key:
        raise ContractViolation("trajectory was produced by a different system")
    v = np.array(v0, dtype=float)
    out = np.empty((len(traj.times),) + v.shape)
    out[0] = v
    for i in range(1, len(traj.times)):
        h = traj.times[i] - traj.times[i - 1]
        if abs(h - traj.dt) <= 1e-9 * traj.dt:
            h = traj.dt
        _, v, _ = system.advance(traj.points[i - 1], h, traj.dt, v=v)
        out[i] = v
    return out


def _quadrature_weights(n_intervals: int, dt: float, rule: str = "simpson") -> np.ndarray:
    w = np.full(n_intervals + 1, dt)
    if rule == "simpson" and n_intervals >= 2 and n_intervals % 2 == 0:
        w[1:-1:2] = 4.0 * dt / 3.0
        w[2:-1:2] = 2.0 * dt / 3.0
        w[0] = w[-1] = dt / 3.0
    else:
        w[0] = w[-1] = dt / 2.0
    return w


def backward_nodes(system: FlowSystem, p: np.ndarray, T: float, dt: float) -> np.ndarray:
    """Points ``f^{-j dt} p`` for ``j = 0..K`` with shape ``(K + 1, n, d)``."""
    K = int(round(T / dt))
    nodes = np.empty((K + 1,) + p.shape)
    nodes[0] = p
    q = p
    for j in range(1, K + 1):
        try:
            q, _, _ = system.advance(q, -dt, dt)
        except (IntegrationDiverged, ChartError) as exc:
            raise ChartError(f"backward orbit left the chart at theta={j * dt:.4g}") from exc
        nodes[j] = q
    return nodes


def pullback_accumulate(system: FlowSystem, p, Y: Callable[[np.ndarray], np.ndarray],
                        T: float, dt: float,
                        project: Optional[Callable[[int, np.ndarray, np.ndarray], np.ndarray]] = None,
                        rule: str = "simpson", nodes: Optional[np.ndarray] = None) -> np.ndarray:
    """Quadrature of ``int_0^T (T_{f^{-theta} p} f^theta) Y(f^{-theta} p) dtheta``.

    ``Y`` is a field (callable on points) or an array of values at the
    backward nodes, shape ``(K + 1, n, d)``.  The backward orbit is
    reconstructed first; the integral is then
    accumulated by marching forward from the oldest node, so that
    ``project(j, points, vectors)`` (if given) can re-project the running
    sum at node ``j`` -- this keeps contracting accumulations numerically
    stable over long horizons.
    """
    if T <= 0:
        raise ContractViolation("horizon T must be positive")
    p = np.array(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if nodes is None:
        nodes = backward_nodes(system, p, T, dt)
    K = nodes.shape[0] - 1
    w = _quadrature_weights(K, dt, rule)
    y_at = (lambda j: Y(nodes[j])) if callable(Y) else (lambda j: Y[j])
    acc = w[K] * y_at(K)
    if project is not None:
        acc = project(K, nodes[K], acc)
    for j in range(K, 0, -1):
        _, acc, _ = system.advance(nodes[j], dt, dt, v=acc)
        acc = acc + w[j - 1] * y_at(j - 1)
        if project is not None:
            acc = project(j - 1, nodes[j - 1], acc)
    return acc[0] if single else acc
