"""Compiled position-only stepping for the perturbed cat suspension.

Used for long Birkhoff averages, where the numpy integrator is dominated by
per-step overhead.  The algorithm mirrors ``CatSuspension._step`` exactly
(classical RK4, crossing time by Newton on ``s - psi(x)``); results agree
with the numpy path up to rounding.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not args or not callable(args[0]) else args[0]

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _roof(x1, x2, base, ramp, rk, rph):
    v = base
    for j in range(ramp.shape[0]):
        v += ramp[j] * math.cos(TWO_PI * (rk[j, 0] * x1 + rk[j, 1] * x2) + rph[j])
    return v


@njit(cache=True)
def _roof_grad(x1, x2, ramp, rk, rph):
    g1 = 0.0
    g2 = 0.0
    for j in range(ramp.shape[0]):
        sn = -ramp[j] * TWO_PI * math.sin(TWO_PI * (rk[j, 0] * x1 + rk[j, 1] * x2) + rph[j])
        g1 += sn * rk[j, 0]
        g2 += sn * rk[j, 1]
    return g1, g2


@njit(cache=True)
def _field(x1, x2, s, vc, a, base, ramp, rk, rph, fc, famp, fk, fph):
    psi = _roof(x1, x2, base, ramp, rk, rph)
    sw = math.sin(math.pi * s / psi)
    w = a * sw * sw * sw * sw
    f0 = 0.0
    f1 = 0.0
    f2 = 0.0
    for j in range(famp.shape[0]):
        c = famp[j] * math.cos(TWO_PI * (fk[j, 0] * x1 + fk[j, 1] * x2) + fph[j])
        if fc[j] == 0:
            f0 += c
        elif fc[j] == 1:
            f1 += c
        else:
            f2 += c
    return w * f0, w * f1, w * f2 + vc


@njit(cache=True)
def _rk4(x1, x2, s, h, vc, a, base, ramp, rk, rph, fc, famp, fk, fph):
    a1, b1, c1 = _field(x1, x2, s, vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
    a2, b2, c2 = _field(x1 + 0.5 * h * a1, x2 + 0.5 * h * b1, s + 0.5 * h * c1,
                        vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
    a3, b3, c3 = _field(x1 + 0.5 * h * a2, x2 + 0.5 * h * b2, s + 0.5 * h * c2,
                        vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
    a4, b4, c4 = _field(x1 + h * a3, x2 + h * b3, s + h * c3,
                        vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
    return (x1 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4),
            x2 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4),
            s + h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4))


@njit(cache=True)
def _wrap(x):
    x = x - math.floor(x)
    if x >= 1.0:
        x -= 1.0
    return x


@njit(cache=True)
def advance_batch(p, t, dt, vc, a, base, ramp, rk, rph, fc, famp, fk, fph):
    out = p.copy()
    n_steps = max(int(math.ceil(t / dt - 1e-9)), 0)
    for i in range(out.shape[0]):
        x1, x2, s = out[i, 0], out[i, 1], out[i, 2]
        done = 0.0
        for _ in range(n_steps):
            h = min(dt, t - done)
            rem = h
            for _it in range(1000):
                if rem <= 0.0:
                    break
                y1, y2, ys = _rk4(x1, x2, s, rem, vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
                g1 = ys - _roof(y1, y2, base, ramp, rk, rph)
                if g1 < 0.0:
                    x1, x2, s = _wrap(y1), _wrap(y2), ys
                    rem = 0.0
                    break
                g0 = s - _roof(x1, x2, base, ramp, rk, rph)
                th = rem * (-g0) / (g1 - g0)
                for _k in range(8):
                    z1, z2, zs = _rk4(x1, x2, s, th, vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
                    g = zs - _roof(z1, z2, base, ramp, rk, rph)
                    f1, f2, f3 = _field(z1, z2, zs, vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
                    r1, r2 = _roof_grad(z1, z2, ramp, rk, rph)
                    stp = g / (f3 - r1 * f1 - r2 * f2)
                    th = min(max(th - stp, 0.0), rem)
                    if abs(stp) < 1e-15:
                        break
                z1, z2, zs = _rk4(x1, x2, s, th, vc, a, base, ramp, rk, rph, fc, famp, fk, fph)
                x1 = _wrap(2.0 * z1 + z2)
                x2 = _wrap(z1 + z2)
                s = 0.0
                rem = rem - th
            done += h
        out[i, 0], out[i, 1], out[i, 2] = x1, x2, s
    return out


def pack_roof(roof):
    ramp = np.array([t.amp for t in roof.terms], dtype=float)
    rk = np.array([t.k for t in roof.terms], dtype=float).reshape(-1, 2)
    rph = np.array([t.phase for t in roof.terms], dtype=float)
    return float(roof.base), ramp, rk, rph


def pack_perturbation(field, roof):
    """``(vertical coefficient, windowed terms)`` if the field is supported, else None."""
    from .fields import CombinedField, VerticalField, WindowedTrigField, ZeroField

    vert = 0.0
    terms = []

    def visit(f, c):
        nonlocal vert
        if isinstance(f, ZeroField):
            return True
        if isinstance(f, VerticalField):
            vert += c * f.c
            return True
        if isinstance(f, WindowedTrigField):
            if f.roof != roof:
                return False
            terms.extend((t.comp, c * t.amp, t.k, t.phase) for t in f.terms)
            return True
        if isinstance(f, CombinedField):
            return all(visit(g, c * cc) is not False for cc, g in f.parts)
        return False

    if visit(field, 1.0) is False:
        return None
    fc = np.array([t[0] for t in terms], dtype=np.int64)
    famp = np.array([t[1] for t in terms], dtype=float)
    fk = np.array([t[2] for t in terms], dtype=float).reshape(-1, 2)
    fph = np.array([t[3] for t in terms], dtype=float)
    return vert, fc, famp, fk, fph
