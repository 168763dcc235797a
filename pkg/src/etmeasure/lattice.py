"""Open spin-1/2 chains: box Hamiltonians, locality error and box energy fluctuations.

Sites are numbered 0..L-1 with site 0 the leftmost tensor factor.  A box is a
contiguous inclusive interval ``(lo, hi)`` of sites.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, ValidationError
from .metrics import bures_angle, energy_fluctuation
from .qcore import HBAR, check_hermitian, random_density, random_hermitian, random_pure

MAX_SITES = 12
LOCAL_DIM = 2


@dataclass(frozen=True)
class ChainSpec:
    """Nearest-neighbour chain: on-site terms h[x] and bond terms phi[x] on (x, x+1)."""

    L: int
    h: tuple[np.ndarray, ...]
    phi: tuple[np.ndarray, ...]
    J: float

    def __post_init__(self):
        if self.L > MAX_SITES:
            raise CapacityError(f"chains are limited to {MAX_SITES} sites, got {self.L}")
        if self.L < 1:
            raise ArgumentError("need at least one site")
        if len(self.h) != self.L or len(self.phi) != self.L - 1:
            raise ValidationError("need L on-site terms and L-1 bond terms")
        for x in self.h:
            check_hermitian(x, name="on-site term")
        for b in self.phi:
            check_hermitian(b, name="bond term")
            if np.linalg.norm(b, ord=2) > self.J * (1 + 1e-12):
                raise ValidationError("bond term exceeds the interaction bound J")


def random_chain(L: int, seed: int, J: float = 1.0) -> ChainSpec:
    """Random on-site fields and bonds rescaled to operator norm J."""
    rng = np.random.default_rng(seed)
    h = tuple(random_hermitian(LOCAL_DIM, rng) for _ in range(L))
    phi = []
    for _ in range(L - 1):
        b = random_hermitian(LOCAL_DIM ** 2, rng)
        phi.append(J * b / np.linalg.norm(b, ord=2))
    return ChainSpec(L, h, tuple(phi), J)


def _check_box(c: ChainSpec, box: tuple[int, int]) -> tuple[int, int]:
    lo, hi = int(box[0]), int(box[1])
    if hi < lo:
        raise ArgumentError("empty box")
    if lo < 0 or hi >= c.L:
        raise ArgumentError(f"box {box} outside the chain [0, {c.L})")
    return lo, hi


def embed_sites(op: np.ndarray, first: int, L: int) -> np.ndarray:
    """Place an operator on consecutive sites starting at ``first``."""
    n = int(round(np.log2(op.shape[0])))
    left = np.eye(LOCAL_DIM ** first)
    right = np.eye(LOCAL_DIM ** (L - first - n))
    return np.kron(np.kron(left, op), right)


def box_hamiltonian(c: ChainSpec, box: tuple[int, int]) -> np.ndarray:
    """H_box = sum of on-site terms in the box plus bonds with both ends in it."""
    lo, hi = _check_box(c, box)
    d = LOCAL_DIM ** c.L
    h = np.zeros((d, d), dtype=complex)
    for x in range(lo, hi + 1):
        h += embed_sites(c.h[x], x, c.L)
    for x in range(lo, hi):
        h += embed_sites(c.phi[x], x, c.L)
    return h


def full_hamiltonian(c: ChainSpec) -> np.ndarray:
    return box_hamiltonian(c, (0, c.L - 1))


def heisenberg(h: np.ndarray, a: np.ndarray, t: float, eig=None) -> np.ndarray:
    """alpha_t(A) = exp(iHt) A exp(-iHt)."""
    w, u = eig if eig is not None else np.linalg.eigh(h)
    ut = (u * np.exp(1j * w * t / HBAR)) @ u.conj().T
    return ut @ a @ ut.conj().T


def locality_error(c: ChainSpec, a_site0: np.ndarray, t: float, box: tuple[int, int],
                   full_eig=None) -> float:
    """||alpha_t(A) - alpha_t^box(A)|| for A on site 0, the full chain standing in for infinite volume."""
    lo, hi = _check_box(c, box)
    if lo != 0:
        raise ArgumentError("box must contain site 0")
    a = embed_sites(np.asarray(a_site0, dtype=complex), 0, c.L)
    full = heisenberg(full_hamiltonian(c), a, t, full_eig)
    local = heisenberg(box_hamiltonian(c, box), a, t)
    d = full - local
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def locality_profile(c: ChainSpec, a_site0: np.ndarray, t: float) -> np.ndarray:
    """Locality error for boxes [0, r], r = 0..L-1."""
    eig = np.linalg.eigh(full_hamiltonian(c))
    return np.array([locality_error(c, a_site0, t, (0, r), eig) for r in range(c.L)])


def product_state(sites: Sequence[np.ndarray]) -> np.ndarray:
    out = np.array([1.0 + 0j])
    for v in sites:
        out = np.kron(out, np.asarray(v, dtype=complex))
    return out


def box_energy_fluctuation(c: ChainSpec, box: tuple[int, int], omega: Sequence[np.ndarray]) -> float:
    """Delta H_box in the product state omega (one site vector per site)."""
    if len(omega) != c.L:
        raise ArgumentError("need one site state per site")
    psi = product_state(omega)
    return energy_fluctuation(box_hamiltonian(c, box), psi)


def random_product_state(L: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [random_pure(LOCAL_DIM, rng) for _ in range(L)]


@dataclass(frozen=True)
class RasteginResult:
    passed: bool
    min_slack: float
    trials: int


def rastegin_check(trials: int, d: int, seed: int) -> RasteginResult:
    """Triangle inequality of the Bures angle on random density triples."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(trials):
        r0, r1, s = (random_density(d, rng, rank=int(rng.integers(1, d + 1))) for _ in range(3))
        slack = bures_angle(r0, s) + bures_angle(r1, s) - bures_angle(r0, r1)
        worst = min(worst, slack)
    return RasteginResult(bool(worst >= -1e-9), float(worst), trials)
