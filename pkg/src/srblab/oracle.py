"""Brute-force reference computations.

Nothing here imports the flow, splitting, response or symbolic modules: every
result is rebuilt from numpy primitives so that tests can compare two
independent routes.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
CAT_LAMBDA = (3.0 + math.sqrt(5.0)) / 2.0
_CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
_CAT_INV = np.array([[1.0, -1.0], [-1.0, 2.0]])


class Exactness(str, enum.Enum):
    EXACT = "Exact"
    MONTE_CARLO = "MonteCarlo"


@dataclass
class OracleResult:
    name: str
    value: object
    method: str
    exactness: Exactness = Exactness.EXACT
    sigma: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.exactness is Exactness.EXACT and self.sigma is not None:
            raise ValueError("exact oracle results carry no sigma")
        if self.exactness is Exactness.MONTE_CARLO and self.sigma is None:
            raise ValueError("Monte Carlo oracle results need a sigma")

    def to_dict(self) -> dict:
        d = {"name": self.name, "value": _jsonable(self.value), "method": self.method,
             "exactness": self.exactness.value}
        if self.sigma is not None:
            d["sigma"] = float(self.sigma)
        for k, v in self.extra.items():
            d[k] = _jsonable(v)
        return d


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.complexfloating):
        return {"re": float(v.real), "im": float(v.imag)}
    return v


def write_manifest(results, path) -> None:
    payload = [r.to_dict() for r in results]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Markov chains and periodic orbits


@dataclass
class GibbsOracle:
    pressure: float
    distribution: np.ndarray
    kernel: np.ndarray


def markov_gibbs_oracle(tau, phi, psi=None, c: float = 0.0) -> GibbsOracle:
    """Memory-1 Gibbs data for the potential ``phi - c psi``.

    The stationary law is obtained by solving ``pi (K - I) = 0`` with
    ``sum(pi) = 1`` rather than from a left eigenvector.
    """
    tau = np.asarray(tau, dtype=float)
    n = tau.shape[0]
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n,))
    psi = np.ones(n) if psi is None else np.broadcast_to(np.asarray(psi, dtype=float), (n,))
    L = tau * np.exp(phi - c * psi)[:, None]
    vals, vecs = np.linalg.eig(L)
    i = int(np.argmax(vals.real))
    lam = float(vals[i].real)
    h = np.abs(vecs[:, i].real)
    K = L * h[None, :] / (lam * h[:, None])
    A = np.vstack([(K - np.eye(n)).T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return GibbsOracle(float(np.log(lam)), pi, K)


def bowen_root_oracle(tau, phi, psi, lo: float = -50.0, hi: float = 50.0) -> float:
    """Plain bisection on ``c -> P(phi - c psi)``."""
    tau = np.asarray(tau, dtype=float)
    n = tau.shape[0]
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n,))
    psi = np.broadcast_to(np.asarray(psi, dtype=float), (n,))
    # only the Perron root is needed; eigenvectors can underflow at the bracket ends
    f = lambda c: math.log(float(np.max(np.linalg.eigvals(tau * np.exp(phi - c * psi)[:, None]).real)))
    flo, fhi = f(lo), f(hi)
    if flo < 0 or fhi > 0:
        raise ValueError("root not bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def periodic_orbit_enumerator(tau, max_period: int) -> list[tuple[int, ...]]:
    """Primitive admissible cycles of period ``<= max_period``, one per rotation class."""
    if max_period > 8:
        raise ValueError("max_period is limited to 8")
    tau = np.asarray(tau)
    n = tau.shape[0]
    out = []
    for p in range(1, max_period + 1):
        for word in itertools.product(range(n), repeat=p):
            if not all(tau[word[i], word[(i + 1) % p]] for i in range(p)):
                continue
            rots = [word[i:] + word[:i] for i in range(p)]
            if word != min(rots):
                continue
            if any(p % d == 0 and word == word[d:] + word[:d] for d in range(1, p)):
                continue
            out.append(word)
    return out


# ---------------------------------------------------------------------------
# Finite-difference slopes


@dataclass
class SlopeResult:
    slope: float
    sigma: float
    inconclusive: bool


def fd_slope_oracle(plus, minus, a: float) -> SlopeResult:
    """Central difference from matched batch means at ``+a`` and ``-a``."""
    plus = np.atleast_1d(np.asarray(plus, dtype=float))
    minus = np.atleast_1d(np.asarray(minus, dtype=float))
    diff = (plus - minus) / (2.0 * a)
    slope = float((plus.mean() - minus.mean()) / (2.0 * a))
    sigma = float(np.std(diff, ddof=1) / np.sqrt(diff.size)) if diff.size > 1 else 0.0
    return SlopeResult(slope, sigma, abs(slope) < sigma)


# ---------------------------------------------------------------------------
# Resonances of the constant roof


def constant_roof_resonances(re_max: float, im_lo: float = -0.5, im_hi: float = 0.1) -> list[float]:
    """``2 pi k`` inside ``|Re w| <= re_max``, ``im_lo <= Im w <= im_hi``."""
    if re_max < 0 or im_lo > 0 or im_hi < 0:
        return []
    k = int(math.floor(re_max / (2 * math.pi)))
    return [2 * math.pi * j for j in range(-k, k + 1)]


# ---------------------------------------------------------------------------
# Cat suspension geometry


def cat_directions():
    """Unit unstable and stable eigenvectors of the cat matrix."""
    eu = np.array([1.0, (math.sqrt(5.0) - 1.0) / 2.0])
    eu /= np.linalg.norm(eu)
    es = np.array([-eu[1], eu[0]])
    return eu, es


def cat_splitting_oracle(roof_grad: Callable, x, n_terms: int = 60):
    """Unstable and stable directions at torus points ``x`` from the graph series.

    The vertical components are ``h_u(y) = -sum_{n>=1} lam^-n grad psi(M^-n y) . e_u``
    and ``h_s(x) = sum_{n>=0} lam^-n grad psi(M^n x) . e_s``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eu, es = cat_directions()
    hs = np.zeros(len(x))
    y = x.copy()
    for n in range(n_terms):
        hs += CAT_LAMBDA ** -n * (roof_grad(y) @ es)
        y = (y @ _CAT.T) % 1.0
    hu = np.zeros(len(x))
    y = x.copy()
    for n in range(1, n_terms):
        y = (y @ _CAT_INV.T) % 1.0
        hu -= CAT_LAMBDA ** -n * (roof_grad(y) @ eu)
    U = np.column_stack([np.tile(eu, (len(x), 1)), hu])
    S = np.column_stack([np.tile(es, (len(x), 1)), hs])
    U /= np.linalg.norm(U, axis=1)[:, None]
    S /= np.linalg.norm(S, axis=1)[:, None]
    return U, S, hu, hs


def cat_divergence_oracle(field_jacobian: Callable, roof_grad: Callable, points,
                          n_terms: int = 60) -> np.ndarray:
    """Chart formula for the centre-unstable divergence on the unperturbed cat suspension.

    ``C = e_u^T J_xx e_u + dX_s/ds - h_s (e_s . dX_x/ds)`` with ``J`` the chart
    Jacobian of the perturbation.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    eu, es = cat_directions()
    _, _, _, hs = cat_splitting_oracle(roof_grad, points[:, :2], n_terms)
    J = field_jacobian(points)
    return (np.einsum("i,nij,j->n", eu, J[:, :2, :2], eu) + J[:, 2, 2]
            - hs * (J[:, :2, 2] @ es))


def central_gradient(f: Callable, points, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an ``(n, d)`` array."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    out = np.empty_like(points)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        out[:, j] = (f(points + e) - f(points - e)) / (2 * h)
    return out
