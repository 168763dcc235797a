"""State distances, energy fluctuations and speed-limit quantities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .qcore import HBAR, as_density, check_hermitian, psd_sqrt


@dataclass(frozen=True)
class SpectralDistribution:
    """Energy/weight pairs of a Hamiltonian in a state, sorted by energy."""

    energies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if e.shape != w.shape or e.size == 0:
            raise ArgumentError("energies and weights must be nonempty and equally long")
        if np.any(w < -1e-12):
            raise ArgumentError("weights must be nonnegative")
        w = np.clip(w, 0.0, None)
        if abs(w.sum() - 1.0) > 1e-10:
            raise ArgumentError(f"weights sum to {w.sum()!r}, expected 1")
        order = np.argsort(e, kind="stable")
        object.__setattr__(self, "energies", e[order])
        object.__setattr__(self, "weights", w[order])

    @classmethod
    def from_points(cls, points: Sequence[tuple[float, float]]) -> "SpectralDistribution":
        e, w = zip(*points)
        return cls(np.array(e), np.array(w))

    @classmethod
    def of_state(cls, h, state, merge_tol: float = 1e-12) -> "SpectralDistribution":
        """Spectral weights <psi|E(dE)|psi> of ``h`` in ``state`` (degenerate levels merged)."""
        h = check_hermitian(h)
        rho = as_density(state)
        w, u = np.linalg.eigh(h)
        p = np.real(np.einsum("ia,ij,ja->a", u.conj(), rho, u))
        p = np.clip(p, 0.0, None)
        energies, weights = [], []
        for e, q in zip(w, p):
            if energies and abs(e - energies[-1]) <= merge_tol * max(1.0, abs(e)):
                weights[-1] += q
            else:
                energies.append(e)
                weights.append(q)
        weights = np.array(weights)
        return cls(np.array(energies), weights / weights.sum())


@dataclass(frozen=True)
class HistogramDistribution:
    """Continuous spectral density discretized on bins; intervals end on bin edges."""

    edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).reshape(-1)
        w = np.clip(np.asarray(self.weights, dtype=float).reshape(-1), 0.0, None)
        if edges.size != w.size + 1 or np.any(np.diff(edges) <= 0):
            raise ArgumentError("need strictly increasing edges, one more than weights")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", w / w.sum())


def _same_space(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ArgumentError(f"state dimensions differ: {a.shape} vs {b.shape}")


def fidelity(rho0, rho1) -> float:
    """Uhlmann fidelity tr sqrt(sqrt(rho0) rho1 sqrt(rho0)), unsquared."""
    a, b = as_density(rho0), as_density(rho1)
    _same_space(a, b)
    # singular values of sqrt(a) sqrt(b) are the square roots of eig(sqrt(a) b sqrt(a))
    f = float(np.sum(np.linalg.svd(psd_sqrt(a) @ psd_sqrt(b), compute_uv=False)))
    return min(max(f, 0.0), 1.0)


def trace_distance_paper(rho0, rho1) -> float:
    """Trace norm of the difference, sup over ||A|| = 1 of |tr[(rho0 - rho1) A]|.

    No factor 1/2: orthogonal pure states are at distance 2.
    """
    a, b = as_density(rho0), as_density(rho1)
    _same_space(a, b)
    d = a - b
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def bures_angle(rho0, rho1) -> float:
    return float(np.arccos(fidelity(rho0, rho1)))


def expectation(op, state) -> complex:
    return complex(np.trace(as_density(state) @ np.asarray(op, dtype=complex)))


def energy_fluctuation(h, state) -> float:
    """Standard deviation sqrt(<H^2> - <H>^2)."""
    h = check_hermitian(h)
    rho = as_density(state)
    if rho.shape != h.shape:
        raise ArgumentError("Hamiltonian and state dimensions differ")
    m1 = np.trace(rho @ h).real
    m2 = np.trace(rho @ h @ h).real
    # centred form loses less precision than m2 - m1**2
    hc = h - m1 * np.eye(h.shape[0])
    var = np.trace(rho @ hc @ hc).real
    if var < 0:
        var = max(m2 - m1 ** 2, 0.0)
    return float(np.sqrt(max(var, 0.0)))


def overall_width(d: SpectralDistribution | HistogramDistribution, alpha: float) -> float:
    """Length of the smallest interval carrying spectral weight >= alpha.

    Discrete distributions use spectral points as endpoints; histograms use bin
    edges, and an interval [edge_i, edge_j] captures bins i..j-1.
    """
    if not (0.0 < alpha <= 1.0):
        raise ArgumentError(f"alpha must lie in (0, 1], got {alpha!r}")
    if isinstance(d, HistogramDistribution):
        cum = np.concatenate([[0.0], np.cumsum(d.weights)])
        # i-th edge vs j-th edge captures cum[j] - cum[i]
        e = d.edges
        best = np.inf
        j = 0
        for i in range(e.size):
            j = max(j, i)
            while j < e.size and cum[j] - cum[i] < alpha - 1e-12:
                j += 1
            if j == e.size:
                break
            best = min(best, e[j] - e[i])
        return float(best)
    e, w = d.energies, d.weights
    cum = np.concatenate([[0.0], np.cumsum(w)])
    target = alpha - 1e-12
    best = np.inf
    j = 0
    # two-pointer sweep: for each left end i, smallest right end j with mass >= alpha
    for i in range(e.size):
        j = max(j, i)
        while j < e.size and cum[j + 1] - cum[i] < target:
            j += 1
        if j == e.size:
            break
        best = min(best, e[j] - e[i])
    return float(best)


def mt_overlap_bound(delta_h: float, t: float) -> float:
    """Mandelstam-Tamm lower bound cos(dH t / hbar); 0 once dH t exceeds pi/2 hbar."""
    x = abs(delta_h * t) / HBAR
    if x > np.pi / 2:
        return 0.0
    return float(np.cos(x))
