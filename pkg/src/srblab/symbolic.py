"""Thermodynamic formalism for suspension flows over subshifts of finite type.

Potentials and roofs are locally constant on ``m``-cylinders, so every
transfer operator is an exact finite matrix indexed by admissible
``m``-words.  A state ``w`` may be followed by ``w'`` when ``w'`` is ``w``
shifted by one symbol and the new pair is allowed by ``tau``; the weight of
that transition is ``exp(f(w))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .stats import N_BATCHES, batch_mean_error

CylinderFunction = Union[Sequence[float], np.ndarray, Callable[[tuple], float]]


class SymbolicError(RuntimeError):
    pass


class NotMixingError(SymbolicError):
    pass


class BracketError(SymbolicError):
    def __init__(self, interval, values):
        self.interval = tuple(interval)
        super().__init__(f"no sign change of the pressure on [{interval[0]:.6g}, {interval[1]:.6g}]"
                         f" (values {values[0]:.3g}, {values[1]:.3g})")


class DegeneracyError(SymbolicError):
    pass


class ResolutionError(SymbolicError):
    pass


class ExtensionError(SymbolicError):
    pass


class BranchTrackingError(SymbolicError):
    def __init__(self, omega: complex, overlap: float):
        self.omega = complex(omega)
        self.overlap = float(overlap)
        super().__init__(f"eigenvalue branch lost at omega={self.omega:.6g} (overlap {overlap:.3f})")


def check_mixing(tau) -> Optional[int]:
    """Smallest ``k <= n^2`` with ``tau^k > 0`` entrywise, or None."""
    t = (np.asarray(tau) != 0).astype(np.int64)
    n = t.shape[0]
    if t.shape != (n, n):
        raise ValueError("tau must be square")
    power = t.copy()
    for k in range(1, n * n + 1):
        if np.all(power > 0):
            return k
        power = ((power @ t) > 0).astype(np.int64)
    return None


@dataclass
class SftSystem:
    """Subshift of finite type with memory-``m`` roof and potential tables."""

    tau: np.ndarray
    memory: int = 1
    psi: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    psi_min: float = 1e-3
    words: list = field(init=False)

    def __post_init__(self):
        self.tau = (np.asarray(self.tau) != 0).astype(np.int64)
        n = self.tau.shape[0]
        if self.tau.shape != (n, n):
            raise ValueError("tau must be square")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        self.words = [w for w in itertools.product(range(n), repeat=self.memory)
                      if all(self.tau[w[i], w[i + 1]] for i in range(self.memory - 1))]
        self._index = {w: i for i, w in enumerate(self.words)}
        self.psi = self.cylinder_values(self.psi if self.psi is not None else 1.0)
        self.phi = self.cylinder_values(self.phi if self.phi is not None else 0.0)
        if np.min(self.psi) < self.psi_min:
            raise ValueError(f"roof minimum {np.min(self.psi):.4g} below psi_min={self.psi_min}")
        adj = np.zeros((len(self.words), len(self.words)), dtype=np.int64)
        for i, w in enumerate(self.words):
            for b in range(n):
                if self.tau[w[-1], b]:
                    nxt = (w + (b,))[1:]
                    adj[i, self._index[nxt]] = 1
        self.adjacency = adj

    @property
    def n_symbols(self) -> int:
        return self.tau.shape[0]

    @property
    def n_states(self) -> int:
        return len(self.words)

    def index(self, word) -> int:
        return self._index[tuple(word)]

    def cylinder_values(self, f: CylinderFunction) -> np.ndarray:
        if callable(f):
            return np.array([float(f(w)) for w in self.words])
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            return np.full(len(self.words), float(arr))
        if arr.shape == (len(self.words),):
            return arr.copy()
        if self.memory > 1 and arr.shape == (self.n_symbols,):
            return np.array([arr[w[0]] for w in self.words])
        raise ValueError(f"cylinder table has shape {arr.shape}, expected ({len(self.words)},)")

    def mixing_power(self) -> Optional[int]:
        return check_mixing(self.tau)

    def require_mixing(self):
        if check_mixing(self.tau) is None:
            raise NotMixingError("transition matrix is not mixing")

    def weighted_matrix(self, weight: CylinderFunction) -> np.ndarray:
        f = self.cylinder_values(weight)
        return self.adjacency * np.exp(f)[:, None]


def _perron(Q: np.ndarray, gap_tol: float = 1e-9):
    """Perron root with right/left eigenvectors (positive) and the spectral gap."""
    vals, right = np.linalg.eig(Q)
    i = int(np.argmax(vals.real))
    lam = vals[i].real
    r = np.abs(right[:, i].real)
    lvals, left = np.linalg.eig(Q.T)
    j = int(np.argmin(np.abs(lvals - lam)))
    ell = np.abs(left[:, j].real)
    others = np.delete(np.abs(vals), i)
    second = float(np.max(others)) if others.size else 0.0
    return lam, r, ell, second


def pressure(sft: SftSystem, weight: CylinderFunction) -> float:
    """Log of the Perron eigenvalue of the weighted transfer matrix."""
    sft.require_mixing()
    lam, _, _, _ = _perron(sft.weighted_matrix(weight))
    return float(np.log(lam))


def _equilibrium_mean(sft: SftSystem, f: np.ndarray, g: np.ndarray) -> float:
    lam, r, ell, _ = _perron(sft.adjacency * np.exp(f)[:, None])
    pi = ell * r
    return float(pi @ g / pi.sum())


def bowen_root(sft: SftSystem, phi: CylinderFunction | None = None,
               psi: CylinderFunction | None = None, tol: float = 1e-12) -> float:
    """The ``c`` with ``P(phi - c psi) = 0``.

    ``c -> P(phi - c psi)`` is strictly decreasing with slope ``-nu_c(psi)``
    between ``-max psi`` and ``-min psi``, so the root lies in
    ``[P0 / max psi, P0 / min psi]`` (ordered) with ``P0 = P(phi)``.
    """
    sft.require_mixing()
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    if np.min(ps) <= 0:
        raise ValueError("roof must be positive")

    def P(c):
        return pressure(sft, ph - c * ps)

    p0 = P(0.0)
    lo, hi = sorted((p0 / np.max(ps), p0 / np.min(ps)))
    pad = 1e-9 * max(1.0, abs(lo), abs(hi))
    lo, hi = lo - pad, hi + pad
    plo, phi_ = P(lo), P(hi)
    if plo < 0 or phi_ > 0:
        raise BracketError((lo, hi), (plo, phi_))
    if plo == 0:
        return float(lo)
    if phi_ == 0:
        return float(hi)
    c = brentq(P, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(5):
        val = P(c)
        if abs(val) < tol:
            break
        c = c + val / _equilibrium_mean(sft, ph - c * ps, ps)
    return float(c)


@dataclass
class EquilibriumState:
    """Markov measure on ``m``-cylinders for the potential ``phi - c psi``."""

    weights: np.ndarray
    kernel: np.ndarray
    c: float
    mean_roof: float
    eigenvalue: float
    right: np.ndarray
    left: np.ndarray

    def invariance_residual(self) -> float:
        return float(np.max(np.abs(self.weights @ self.kernel - self.weights)))

    def entropy(self) -> float:
        k = self.kernel
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(k > 0, k * np.log(np.where(k > 0, k, 1.0)), 0.0)
        return float(-(self.weights @ terms.sum(axis=1)))

    def mean(self, g: np.ndarray) -> float:
        return float(self.weights @ g)


def equilibrium_state(sft: SftSystem, phi: CylinderFunction | None = None,
                      psi: CylinderFunction | None = None, c: float | None = None,
                      gap_tol: float = 1e-9) -> EquilibriumState:
    """Gibbs state of ``phi - c psi`` from the Perron data of the weighted matrix."""
    sft.require_mixing()
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    if c is None:
        c = bowen_root(sft, ph, ps)
    Q = sft.adjacency * np.exp(ph - c * ps)[:, None]
    lam, r, ell, second = _perron(Q)
    if second > lam * (1.0 - gap_tol):
        raise DegeneracyError(f"leading eigenvalue {lam:.6g} is not simple (next modulus {second:.6g})")
    kernel = Q * r[None, :] / (lam * r[:, None])
    pi = ell * r
    pi = pi / pi.sum()
    return EquilibriumState(pi, kernel, float(c), float(pi @ ps), float(lam), r / r.sum(),
                            ell / ell.sum())


def variational_gap(sft: SftSystem, state: EquilibriumState, phi=None, psi=None) -> float:
    """``h(nu) + nu(phi - c psi)`` for the equilibrium state (zero at the Bowen root)."""
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    return state.entropy() + state.mean(ph - state.c * ps)


def periodic_measure_value(sft: SftSystem, cycle: Sequence[int], f: np.ndarray) -> float:
    """Average of the cylinder function ``f`` along a periodic symbol sequence."""
    p = len(cycle)
    m = sft.memory
    vals = []
    for i in range(p):
        w = tuple(cycle[(i + k) % p] for k in range(m))
        vals.append(f[sft.index(w)])
    return float(np.mean(vals))


def pressure_curve(sft: SftSystem, c_grid, phi=None, psi=None) -> tuple[np.ndarray, np.ndarray]:
    """``P(phi - c psi)`` on a grid together with the exact slope ``-nu_c(psi)``."""
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    vals = np.array([pressure(sft, ph - c * ps) for c in c_grid])
    slopes = np.array([-_equilibrium_mean(sft, ph - c * ps, ps) for c in c_grid])
    return vals, slopes


# ---------------------------------------------------------------------------
# Suspension averages and correlations


def _romberg_midpoint(A, state_index: int, psi: float, n_cells: int, levels: int = 3) -> float:
    """Integral of ``A(w, t)`` over ``[0, psi)`` by midpoint sums on ``n, 2n, 4n`` cells.

    Extrapolation is written as ``fine + (fine - coarse) / (4^k - 1)`` so that
    integrands the midpoint rule already integrates exactly are returned
    unchanged.
    """
    mids = []
    n = n_cells
    for _ in range(levels):
        u = (np.arange(n) + 0.5) / n
        vals = np.asarray(A(state_index, u * psi), dtype=float)
        mids.append((psi / n) * vals.sum())
        n *= 2
    table = mids
    k = 1
    while len(table) > 1:
        f = 4.0 ** k - 1.0
        table = [table[i + 1] + (table[i + 1] - table[i]) / f for i in range(len(table) - 1)]
        k += 1
    return float(table[0])


def suspension_average(sft: SftSystem, state: EquilibriumState, A, n_cells: int | None = None,
                       psi: CylinderFunction | None = None) -> float:
    """``nu(A~) / nu(psi)`` with ``A~(w) = int_0^{psi(w)} A(w, t) dt``.

    ``A(w, t)`` receives the state index and an array of heights.
    """
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    pmin, pmax = float(np.min(ps)), float(np.max(ps))
    if n_cells is None:
        n_cells = 16
        while pmax / n_cells > pmin / 10:
            n_cells *= 2
    if pmax / n_cells > pmin / 10:
        raise ResolutionError(f"quadrature step {pmax / n_cells:.4g} exceeds psi_min/10 = {pmin / 10:.4g}")
    atilde = np.array([_romberg_midpoint(A, i, ps[i], n_cells) for i in range(sft.n_states)])
    return float((state.weights @ atilde) / (state.weights @ ps))


def cylinder_integrals(sft: SftSystem, A, n_cells: int = 16, psi=None) -> np.ndarray:
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    return np.array([_romberg_midpoint(A, i, ps[i], n_cells) for i in range(sft.n_states)])


@dataclass
class CorrelationSamples:
    times: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    n_samples: int

    def to_csv_rows(self):
        for t, v, s in zip(self.times, self.values, self.sigma):
            yield [float(t), float(np.real(v)), float(np.imag(v)), float(s)]


def sample_suspension(sft: SftSystem, state: EquilibriumState, n: int, n_ext: int,
                      rng: np.random.Generator):
    """Suspension points: state chains of length ``n_ext + 1`` and heights."""
    ps = sft.psi
    p0 = state.weights * ps
    p0 = p0 / p0.sum()
    chains = np.empty((n, n_ext + 1), dtype=np.int64)
    chains[:, 0] = rng.choice(sft.n_states, size=n, p=p0)
    cum = np.cumsum(state.kernel, axis=1)
    cum[:, -1] = 1.0
    for k in range(1, n_ext + 1):
        u = rng.random(n)
        rows = cum[chains[:, k - 1]]
        chains[:, k] = np.minimum((rows < u[:, None]).sum(axis=1), sft.n_states - 1)
    heights = rng.random(n) * ps[chains[:, 0]]
    return chains, heights


def flow_suspension(sft: SftSystem, chains: np.ndarray, heights: np.ndarray, t: float):
    """Current state index and height after flowing time ``t`` (roof sums along the chain)."""
    ps = sft.psi
    n, L = chains.shape
    pos = np.zeros(n, dtype=np.int64)
    h = heights + t
    while True:
        cur = ps[chains[np.arange(n), pos]]
        over = h >= cur
        if not np.any(over):
            break
        if np.any(pos[over] + 1 >= L):
            raise ExtensionError("symbol chain too short for the requested time")
        h[over] -= cur[over]
        pos[over] += 1
    return chains[np.arange(n), pos], h


def flow_correlation(sft: SftSystem, state: EquilibriumState, B, Bp, t_grid, n_samples: int = 20000,
                     n_ext: int | None = None, seed: int = 0) -> CorrelationSamples:
    """Monte Carlo ``rho(B o f^t . B') - rho(B) rho(B')`` on the suspension.

    ``B(w, t)`` and ``B'(w, t)`` take arrays of state indices and heights.
    Means are the empirical means over the same samples, so ``B' = 1`` gives
    exactly zero.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    pmin = float(np.min(sft.psi))
    t_max = float(np.max(t_grid)) if t_grid.size else 0.0
    if n_ext is None:
        n_ext = int(np.ceil(t_max / pmin)) + 2
    if t_max > n_ext * pmin:
        raise ExtensionError(f"t_max={t_max:g} exceeds n_ext*psi_min={n_ext * pmin:g}")
    rng = np.random.default_rng(seed)
    chains, h0 = sample_suspension(sft, state, n_samples, n_ext, rng)
    bp = np.asarray(Bp(chains[:, 0], h0))
    vals = []
    sig = []
    size = n_samples // N_BATCHES
    for t in t_grid:
        w, h = flow_suspension(sft, chains, h0, float(t))
        bt = np.asarray(B(w, h))
        cov = np.mean(bt * bp) - np.mean(bt) * np.mean(bp)
        bt_b = bt[:size * N_BATCHES].reshape(N_BATCHES, size)
        bp_b = bp[:size * N_BATCHES].reshape(N_BATCHES, size)
        per = np.mean(bt_b * bp_b, axis=1) - np.mean(bt_b, axis=1) * np.mean(bp_b, axis=1)
        vals.append(cov)
        sig.append(float(np.abs(batch_mean_error(per))) if size > 0 else float("nan"))
    return CorrelationSamples(t_grid, np.array(vals), np.array(sig), n_samples)


# ---------------------------------------------------------------------------
# Twisted transfer operators and resonances


@dataclass
class TransferOperator:
    matrix: np.ndarray
    omega: complex
    eigenfunction: np.ndarray

    def normalized(self) -> np.ndarray:
        s = self.eigenfunction
        return self.matrix * s[None, :] / s[:, None]


def twisted_matrix(sft: SftSystem, phi, psi, c: float, omega: complex) -> np.ndarray:
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    return sft.adjacency * np.exp(ph - c * ps - 1j * omega * ps)[:, None]


def transfer_operator(sft: SftSystem, phi, psi, c: float, omega: complex = 0.0) -> TransferOperator:
    Q0 = twisted_matrix(sft, phi, psi, c, 0.0).real
    _, r, _, _ = _perron(Q0)
    return TransferOperator(twisted_matrix(sft, phi, psi, c, omega), complex(omega), r / r.max())


def _overlap(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))


def _select(Q: np.ndarray, ref: np.ndarray):
    vals, vecs = np.linalg.eig(Q)
    ov = np.abs(vecs.conj().T @ ref) / (np.linalg.norm(vecs, axis=0) * np.linalg.norm(ref))
    i = int(np.argmax(ov))
    return vals[i], vecs[:, i], float(ov[i])


def _track(sft, ph, ps, c, start_omega, start_vec, target, min_steps=8, max_step=0.05,
           min_overlap=0.9):
    """Follow the eigenvalue branch from ``start_omega`` to ``target`` by overlap."""
    dist = abs(target - start_omega)
    n = max(min_steps, int(np.ceil(dist / max_step))) if dist > 0 else 0
    w, vec = start_omega, start_vec
    lam = None
    if n == 0:
        lam, vec, ov = _select(twisted_matrix(sft, ph, ps, c, target), vec)
        return lam, vec
    path = start_omega + (target - start_omega) * np.arange(1, n + 1) / n
    for w in path:
        lam, nv, ov = _select(twisted_matrix(sft, ph, ps, c, w), vec)
        if ov < min_overlap:
            raise BranchTrackingError(w, ov)
        vec = nv
    return lam, vec


def leading_eigenvalue(sft: SftSystem, phi, psi, c: float, omega: complex,
                       max_step: float = 0.05) -> tuple[complex, np.ndarray]:
    """Eigenvalue of the twisted matrix continued from ``lambda(0) = 1`` to ``omega``."""
    sft.require_mixing()
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    Q0 = twisted_matrix(sft, ph, ps, c, 0.0).real
    lam0, r, _, _ = _perron(Q0)
    if omega == 0:
        return complex(lam0), r.astype(complex)
    lam, vec = _track(sft, ph, ps, c, 0.0, r.astype(complex), complex(omega), max_step=max_step)
    return complex(lam), vec


def eigenvalue_derivative(sft: SftSystem, phi, psi, c: float, omega: complex,
                          vec: np.ndarray | None = None) -> complex:
    """``lambda'(omega) = l Q' r / l r`` with ``Q' = -i psi Q`` (rows weighted by psi)."""
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    Q = twisted_matrix(sft, ph, ps, c, omega)
    if vec is None:
        _, vec = leading_eigenvalue(sft, ph, ps, c, omega)
    lam, r, _ = _select(Q, vec)
    lv, left = np.linalg.eig(Q.T)
    ell = left[:, int(np.argmin(np.abs(lv - lam)))]
    dQ = -1j * ps[:, None] * Q
    return complex((ell @ dQ @ r) / (ell @ r))


def derivative_central_difference(sft, phi, psi, c, h: float = 1e-5) -> complex:
    lp, _ = leading_eigenvalue(sft, phi, psi, c, h)
    lm, _ = leading_eigenvalue(sft, phi, psi, c, -h)
    return (lp - lm) / (2 * h)


@dataclass
class Resonance:
    omega: complex
    refined: bool
    residual: float
    derivative: complex


@dataclass
class SpectralScan:
    re_grid: np.ndarray
    im_grid: np.ndarray
    values: np.ndarray
    roots: list
    lambda0: complex
    dlambda0: complex
    tolerance: float

    def real_roots(self, lo: float, hi: float, im_tol: float = 1e-6) -> list:
        return [r for r in self.roots if abs(r.omega.imag) <= im_tol and lo < r.omega.real <= hi]

    def to_csv_rows(self):
        for a, im in enumerate(self.im_grid):
            for b, re in enumerate(self.re_grid):
                lam = self.values[a, b]
                yield [float(re), float(im), float(lam.real), float(lam.imag), float(abs(1 - lam))]

    def roots_json(self) -> list:
        return [{"re": float(r.omega.real), "im": float(r.omega.imag), "refined": bool(r.refined),
                 "residual": float(r.residual)} for r in self.roots]


def _symmetric_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Grid containing 0 when ``lo <= 0 <= hi``."""
    a = int(np.floor(lo / step + 1e-9))
    b = int(np.ceil(hi / step - 1e-9))
    g = np.arange(a, b + 1) * step
    return g[(g >= lo - 1e-12) & (g <= hi + 1e-12)]


def resonance_scan(sft: SftSystem, phi, psi, c: float, strip=(7.0, -0.5, 0.1),
                   step: float = 1e-2, tol: float = 1e-10, max_newton: int = 60) -> SpectralScan:
    """Leading branch ``lambda(omega)`` on ``|Re w| <= R``, ``im_lo <= Im w <= im_hi``, and its 1-roots.

    The branch is tracked along the real axis from ``omega = 0`` and then
    along vertical lines, choosing at each node the eigenvector with the
    largest overlap with its neighbour.  Local minima of ``|1 - lambda|`` seed
    Newton iterations with the analytic derivative.
    """
    sft.require_mixing()
    ph = sft.cylinder_values(phi if phi is not None else sft.phi)
    ps = sft.cylinder_values(psi if psi is not None else sft.psi)
    re_max, im_lo, im_hi = strip
    re_grid = _symmetric_grid(-re_max, re_max, step)
    im_lo_eff, im_hi_eff = min(im_lo, 0.0), max(im_hi, 0.0)
    im_grid = _symmetric_grid(im_lo_eff, im_hi_eff, step)
    n_im, n_re = len(im_grid), len(re_grid)
    i0 = int(np.argmin(np.abs(im_grid)))
    j0 = int(np.argmin(np.abs(re_grid)))
    W = re_grid[None, :] + 1j * im_grid[:, None]
    mats = sft.adjacency[None, None] * np.exp(
        (ph - c * ps)[None, None, :] - 1j * W[:, :, None] * ps[None, None, :])[..., None]
    vals, vecs = np.linalg.eig(mats.reshape(-1, sft.n_states, sft.n_states))
    vals = vals.reshape(n_im, n_re, -1)
    vecs = vecs.reshape(n_im, n_re, sft.n_states, -1)
    lam = np.empty((n_im, n_re), dtype=complex)
    vec = np.empty((n_im, n_re, sft.n_states), dtype=complex)
    Q0 = twisted_matrix(sft, ph, ps, c, 0.0).real
    lam0, r0, _, _ = _perron(Q0)

    def pick(a, b, ref):
        cand = vecs[a, b]
        ov = np.abs(cand.conj().T @ ref) / (np.linalg.norm(cand, axis=0) * np.linalg.norm(ref))
        k = int(np.argmax(ov))
        if ov[k] < 0.9:
            # refine between the neighbour and this node before giving up
            lam_k, v_k = _track(sft, ph, ps, c, W_ref[0], ref, W[a, b], min_steps=4,
                                max_step=step / 8)
            return lam_k, v_k
        return vals[a, b, k], cand[:, k]

    W_ref = [0.0]
    lam[i0, j0], vec[i0, j0] = pick(i0, j0, r0.astype(complex))
    for rng_ in (range(j0 + 1, n_re), range(j0 - 1, -1, -1)):
        prev = j0
        for b in rng_:
            W_ref[0] = W[i0, prev]
            lam[i0, b], vec[i0, b] = pick(i0, b, vec[i0, prev])
            prev = b
    for b in range(n_re):
        for rng_ in (range(i0 + 1, n_im), range(i0 - 1, -1, -1)):
            prev = i0
            for a in rng_:
                W_ref[0] = W[prev, b]
                lam[a, b], vec[a, b] = pick(a, b, vec[prev, b])
                prev = a

    # seeds: local minima of |1 - lambda| (8-neighbourhood)
    F = np.abs(1.0 - lam)
    pad = np.pad(F, 1, constant_values=np.inf)
    is_min = np.ones_like(F, dtype=bool)
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            if da == 0 and db == 0:
                continue
            is_min &= F <= pad[1 + da:1 + da + n_im, 1 + db:1 + db + n_re]
    slope_bound = 2.0 * float(np.max(ps)) * step * np.max(np.abs(lam))
    seeds = [(a, b) for a, b in zip(*np.nonzero(is_min)) if F[a, b] < max(slope_bound, 1e-3)]

    roots: list[Resonance] = []
    for a, b in seeds:
        w = complex(W[a, b])
        v = vec[a, b]
        refined = False
        res = float(F[a, b])
        d = 0j
        for _ in range(max_newton):
            lam_w, v, _ = _select(twisted_matrix(sft, ph, ps, c, w), v)
            d = eigenvalue_derivative(sft, ph, ps, c, w, v)
            if d == 0:
                break
            dw = (1.0 - lam_w) / d
            w = w + dw
            res = float(abs(1.0 - lam_w))
            if abs(dw) < tol:
                lam_w, v, _ = _select(twisted_matrix(sft, ph, ps, c, w), v)
                res = float(abs(1.0 - lam_w))
                refined = True
                break
        inside = (abs(w.real) <= re_max + step) and (im_lo_eff - step <= w.imag <= im_hi_eff + step)
        if not inside:
            continue
        if any(abs(w - r.omega) < 1e-6 for r in roots):
            continue
        roots.append(Resonance(w, refined, res, d))
    roots.sort(key=lambda r: (round(r.omega.real, 6), r.omega.imag))
    d0 = eigenvalue_derivative(sft, ph, ps, c, 0.0, r0.astype(complex))
    return SpectralScan(re_grid, im_grid, lam, roots, complex(lam0), d0, tol)


ADLER_WEISS_CAT = np.array([[1, 1, 0, 1, 0],
                            [1, 1, 0, 1, 0],
                            [1, 1, 0, 1, 0],
                            [0, 0, 1, 0, 1],
                            [0, 0, 1, 0, 1]])


def cat_srb_sft(psi: CylinderFunction = 1.0) -> SftSystem:
    """Five-rectangle Markov partition of the cat map with the SRB potential.

    The unstable Jacobian is the constant ``(3 + sqrt 5) / 2``, so the
    potential ``-log lambda`` per return is exact at memory one; with unit roof
    the Bowen root is zero.
    """
    lam = (3.0 + np.sqrt(5.0)) / 2.0
    return SftSystem(ADLER_WEISS_CAT, 1, psi=psi, phi=-np.log(lam))
