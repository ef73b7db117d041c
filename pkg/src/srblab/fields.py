"""Chart-level building blocks: roofs, height windows, vector fields and observables.

All callables are vectorized over a leading batch axis: points have shape
``(n, d)``, field values ``(n, d)``, field Jacobians ``(n, d, d)``,
observable values ``(n,)`` and gradients ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p[None, :] if p.ndim == 1 else p


# ---------------------------------------------------------------------------
# Roof and window


@dataclass(frozen=True)
class TrigTerm:
    """``amp * cos(2*pi*(k . x) + phase)`` on the 2-torus."""

    amp: float
    k: tuple[int, int]
    phase: float = 0.0

    def _arg(self, x: np.ndarray) -> np.ndarray:
        return (TWO_PI * self.k[0]) * x[:, 0] + (TWO_PI * self.k[1]) * x[:, 1] + self.phase

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.amp * np.cos(self._arg(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        s = (-self.amp * TWO_PI) * np.sin(self._arg(x))
        out = np.empty((x.shape[0], 2))
        out[:, 0] = s * self.k[0]
        out[:, 1] = s * self.k[1]
        return out


@dataclass(frozen=True)
class Roof:
    """Positive roof ``psi(x) = base + sum of trig terms`` over the torus."""

    base: float = 1.0
    terms: tuple[TrigTerm, ...] = ()
    psi_min: float = 0.5

    def __post_init__(self):
        lower = self.base - sum(abs(t.amp) for t in self.terms)
        if lower < self.psi_min:
            raise ValueError(
                f"roof lower bound {lower:.4g} is below psi_min={self.psi_min}")

    @classmethod
    def constant(cls, value: float = 1.0) -> "Roof":
        return cls(base=value)

    @classmethod
    def default(cls, eps_r: float = 0.05) -> "Roof":
        return cls(base=1.0, terms=(TrigTerm(eps_r, (1, 0)),))

    @property
    def is_constant(self) -> bool:
        return not any(t.amp != 0.0 for t in self.terms)

    @property
    def lower_bound(self) -> float:
        return self.base - sum(abs(t.amp) for t in self.terms)

    @property
    def upper_bound(self) -> float:
        return self.base + sum(abs(t.amp) for t in self.terms)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if len(self.terms) == 1:
            return self.base + self.terms[0].value(x)
        out = np.full(x.shape[0], self.base)
        for t in self.terms:
            out = out + t.value(x)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        if len(self.terms) == 1:
            return self.terms[0].grad(x)
        out = np.zeros((x.shape[0], 2))
        for t in self.terms:
            out = out + t.grad(x)
        return out


def window(u: np.ndarray) -> np.ndarray:
    """``sin(pi u)**4``: vanishes to fourth order at u = 0 and u = 1."""
    return np.sin(np.pi * u) ** 4


def window_prime(u: np.ndarray) -> np.ndarray:
    s = np.sin(np.pi * u)
    return 4.0 * np.pi * s ** 3 * np.cos(np.pi * u)


# ---------------------------------------------------------------------------
# Vector fields


class VectorField:
    """Base class; subclasses implement ``__call__`` and ``jacobian``."""

    name = "field"

    def __call__(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other: "VectorField") -> "VectorField":
        return CombinedField(((1.0, self), (1.0, other)))

    def __mul__(self, c: float) -> "VectorField":
        return CombinedField(((float(c), self),))

    __rmul__ = __mul__


class ZeroField(VectorField):
    name = "zero"

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, p):
        return np.zeros_like(_as_points(p))

    def jacobian(self, p):
        p = _as_points(p)
        return np.zeros((p.shape[0], self.dim, self.dim))


class CombinedField(VectorField):
    """Finite linear combination ``sum c_i Y_i``."""

    name = "combination"

    def __init__(self, parts: Sequence[tuple[float, VectorField]]):
        self.parts = tuple(parts)

    def __call__(self, p):
        p = _as_points(p)
        out = np.zeros_like(p)
        for c, f in self.parts:
            out = out + c * f(p)
        return out

    def jacobian(self, p):
        p = _as_points(p)
        out = np.zeros((p.shape[0], p.shape[1], p.shape[1]))
        for c, f in self.parts:
            out = out + c * f.jacobian(p)
        return out


class FunctionField(VectorField):
    """Field given by plain callables (used for ODE testbeds and tests)."""

    def __init__(self, fn: Callable, jac: Callable, name: str = "custom"):
        self._fn = fn
        self._jac = jac
        self.name = name

    def __call__(self, p):
        return self._fn(_as_points(p))

    def jacobian(self, p):
        return self._jac(_as_points(p))


class VerticalField(VectorField):
    """Constant vertical field ``(0, 0, c)`` on the suspension chart."""

    name = "vertical"

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def __call__(self, p):
        p = _as_points(p)
        out = np.zeros_like(p)
        out[:, 2] = self.c
        return out

    def jacobian(self, p):
        p = _as_points(p)
        return np.zeros((p.shape[0], 3, 3))


@dataclass(frozen=True)
class FieldTerm:
    """One trig term of a windowed chart field, acting on component ``comp``."""

    comp: int
    amp: float
    k: tuple[int, int]
    phase: float = 0.0


class WindowedTrigField(VectorField):
    """``X_i(x, s) = w(s / psi(x)) * sum_j amp_j cos(2 pi k_j.x + phase_j)``.

    The height window vanishes to fourth order at the floor and the roof,
    so the field is C^3 across the crossing identification for any choice
    of trig terms.
    """

    name = "windowed_trig"

    def __init__(self, roof: Roof, terms: Sequence[FieldTerm]):
        self.roof = roof
        self.terms = tuple(terms)
        self._k = TWO_PI * np.array([t.k for t in self.terms], dtype=float).reshape(-1, 2)
        self._phase = np.array([t.phase for t in self.terms], dtype=float)
        self._amp = np.array([t.amp for t in self.terms], dtype=float)
        self._scatter = np.zeros((len(self.terms), 3))
        for j, t in enumerate(self.terms):
            self._scatter[j, t.comp] = 1.0

    def _parts(self, p):
        x, s = p[:, :2], p[:, 2]
        psi = self.roof(x)
        u = s / psi
        return x, s, psi, u

    def _values(self, x):
        arg = x @ self._k.T + self._phase
        return (np.cos(arg) * self._amp) @ self._scatter

    def _horizontal(self, x):
        arg = x @ self._k.T + self._phase
        vals = (np.cos(arg) * self._amp) @ self._scatter
        ds = -np.sin(arg) * self._amp
        grads = np.einsum("nj,jc,jk->nck", ds, self._scatter, self._k)
        return vals, grads

    def __call__(self, p):
        p = _as_points(p)
        x, _, _, u = self._parts(p)
        return window(u)[:, None] * self._values(x)

    def jacobian(self, p):
        p = _as_points(p)
        x, s, psi, u = self._parts(p)
        vals, grads = self._horizontal(x)
        w, wp = window(u), window_prime(u)
        du_dx = -(s / psi ** 2)[:, None] * self.roof.grad(x)
        jac = np.zeros((p.shape[0], 3, 3))
        jac[:, :, :2] = w[:, None, None] * grads + (wp[:, None] * vals)[:, :, None] * du_dx[:, None, :]
        jac[:, :, 2] = (wp / psi)[:, None] * vals
        return jac


def benchmark_field(roof: Roof) -> WindowedTrigField:
    """The fixed smooth perturbation used by the cat-suspension benchmark."""
    return WindowedTrigField(roof, (
        FieldTerm(0, 0.3, (1, 1), -np.pi / 2),   # 0.3 sin(2 pi (x1 + x2))
        FieldTerm(1, 0.5, (0, 1), -np.pi / 2),   # 0.5 sin(2 pi x2)
        FieldTerm(2, 0.4, (0, 1)),               # 0.4 cos(2 pi x2)
    ))


def lorenz_field(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> FunctionField:
    def f(p):
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        return np.stack([sigma * (y - x), x * (rho - z) - y, x * y - beta * z], axis=1)

    def jac(p):
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        j = np.zeros((p.shape[0], 3, 3))
        j[:, 0, 0] = -sigma
        j[:, 0, 1] = sigma
        j[:, 1, 0] = rho - z
        j[:, 1, 1] = -1.0
        j[:, 1, 2] = -x
        j[:, 2, 0] = y
        j[:, 2, 1] = x
        j[:, 2, 2] = -beta
        return j

    return FunctionField(f, jac, name="lorenz63")


def lorenz_rho_field() -> FunctionField:
    """Derivative of the Lorenz field with respect to rho: ``(0, x, 0)``."""

    def f(p):
        out = np.zeros_like(p)
        out[:, 1] = p[:, 0]
        return out

    def jac(p):
        j = np.zeros((p.shape[0], 3, 3))
        j[:, 1, 0] = 1.0
        return j

    return FunctionField(f, jac, name="lorenz_rho")


# ---------------------------------------------------------------------------
# Observables


@dataclass
class Observable:
    """Scalar observable with its chart gradient."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    is_constant: bool = field(default=False)

    def __call__(self, p) -> np.ndarray:
        return self.value(_as_points(p))

    def scaled(self, c: float) -> "Observable":
        return Observable(f"{c}*{self.name}", lambda p: c * self.value(p),
                          lambda p: c * self.grad(p), self.is_constant)

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(f"{self.name}+{other.name}",
                          lambda p: self.value(p) + other.value(p),
                          lambda p: self.grad(p) + other.grad(p),
                          self.is_constant and other.is_constant)


def constant_observable(c: float = 1.0, dim: int = 3) -> Observable:
    return Observable(
        f"const({c})",
        lambda p: np.full(p.shape[0], float(c)),
        lambda p: np.zeros((p.shape[0], dim)),
        is_constant=True,
    )


def trig_observable(k: tuple[int, int], amp: float = 1.0, phase: float = 0.0) -> Observable:
    """Height-independent ``amp cos(2 pi k.x + phase)`` on the suspension chart."""
    term = TrigTerm(amp, k, phase)

    def grad(p):
        out = np.zeros((p.shape[0], 3))
        out[:, :2] = term.grad(p[:, :2])
        return out

    return Observable(f"cos({k})", lambda p: term.value(p[:, :2]), grad)


def windowed_observable(roof: Roof, k: tuple[int, int], amp: float = 1.0,
                        phase: float = 0.0) -> Observable:
    """``amp cos(2 pi k.x + phase) * w(s / psi(x))``, smooth on the suspension."""
    term = TrigTerm(amp, k, phase)

    def value(p):
        x, s = p[:, :2], p[:, 2]
        return term.value(x) * window(s / roof(x))

    def grad(p):
        x, s = p[:, :2], p[:, 2]
        psi = roof(x)
        u = s / psi
        c, w, wp = term.value(x), window(u), window_prime(u)
        out = np.empty((p.shape[0], 3))
        out[:, :2] = term.grad(x) * w[:, None] - (c * wp * s / psi ** 2)[:, None] * roof.grad(x)
        out[:, 2] = c * wp / psi
        return out

    return Observable(f"wcos({k})", value, grad)


def benchmark_observable(roof: Roof) -> Observable:
    """``cos(2 pi x2)`` times the smooth height window."""
    return windowed_observable(roof, (0, 1))


def coordinate_observable(i: int, dim: int = 3) -> Observable:
    def grad(p):
        out = np.zeros((p.shape[0], dim))
        out[:, i] = 1.0
        return out

    return Observable(f"coord{i}", lambda p: p[:, i].copy(), grad)
