"""Dense linear algebra and quantum-state primitives.

Natural units are used internally (hbar = 1).  ``HBAR`` is only applied when
reporting dimensionful products such as ``tau * dH``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, ValidationError

HBAR = 1.0
MAX_TOTAL_DIM = 4096

STATE_TOL = 1e-12
HERMITIAN_TOL = 1e-9
CLAMP_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered tensor legs; leg 0 is the system, apparatus legs follow."""

    leg_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.leg_dims)
        if not dims or any(d <= 0 for d in dims):
            raise ArgumentError(f"leg dimensions must be positive, got {self.leg_dims}")
        object.__setattr__(self, "leg_dims", dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.leg_dims))

    @property
    def n_legs(self) -> int:
        return len(self.leg_dims)

    def append(self, d: int) -> "CompositeSpace":
        return CompositeSpace(self.leg_dims + (int(d),))


@dataclass(frozen=True)
class QuantumState:
    """A pure vector or a density operator on a :class:`CompositeSpace`.

    Use :meth:`pure` / :meth:`mixed` to construct; both validate.
    """

    space: CompositeSpace
    data: np.ndarray
    is_pure: bool

    @classmethod
    def pure(cls, vec, space: CompositeSpace | Sequence[int] | None = None,
             tol: float = STATE_TOL) -> "QuantumState":
        v = np.asarray(vec, dtype=complex).reshape(-1)
        space = _coerce_space(space, v.shape[0])
        nrm = np.linalg.norm(v)
        if not np.isfinite(nrm) or abs(nrm - 1.0) > tol:
            raise ValidationError(f"pure state must have unit norm, got {nrm!r}")
        return cls(space, _frozen(v), True)

    @classmethod
    def mixed(cls, rho, space: CompositeSpace | Sequence[int] | None = None,
              tol: float = STATE_TOL) -> "QuantumState":
        r = np.asarray(rho, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValidationError(f"density operator must be square, got {r.shape}")
        space = _coerce_space(space, r.shape[0])
        if not np.all(np.isfinite(r)):
            raise ValidationError("density operator has non-finite entries")
        if np.max(np.abs(r - r.conj().T)) > tol:
            raise ValidationError("density operator is not Hermitian")
        if abs(np.trace(r).real - 1.0) > tol:
            raise ValidationError(f"density operator trace {np.trace(r).real!r} != 1")
        if np.linalg.eigvalsh(r).min() < -tol:
            raise ValidationError("density operator has negative eigenvalues")
        return cls(space, _frozen(r), False)

    @property
    def dim(self) -> int:
        return self.space.dim

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def vector(self) -> np.ndarray:
        if not self.is_pure:
            raise ArgumentError("state is mixed; no state vector")
        return np.array(self.data)


def _coerce_space(space, dim: int) -> CompositeSpace:
    if space is None:
        return CompositeSpace((dim,))
    if not isinstance(space, CompositeSpace):
        space = CompositeSpace(tuple(space))
    if space.dim != dim:
        raise ArgumentError(f"space dimension {space.dim} does not match data dimension {dim}")
    return space


def as_density(x) -> np.ndarray:
    """Density matrix from a QuantumState, a state vector, or a square array."""
    if isinstance(x, QuantumState):
        return x.density()
    a = np.asarray(x, dtype=complex)
    if a.ndim == 1:
        return np.outer(a, a.conj())
    return a


def check_hermitian(h, tol: float = HERMITIAN_TOL, name: str = "operator") -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if np.max(np.abs(h - h.conj().T)) > tol * scale:
        raise ValidationError(f"{name} is not Hermitian")
    return h


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def tensor(a, b, max_dim: int = MAX_TOTAL_DIM) -> np.ndarray:
    """Kronecker product with leg order (a, b)."""
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    b = np.atleast_1d(np.asarray(b, dtype=complex))
    if a.shape[0] * b.shape[0] > max_dim:
        raise CapacityError(
            f"tensor product dimension {a.shape[0] * b.shape[0]} exceeds cap {max_dim}")
    return np.kron(a, b)


def tensor_all(ops: Iterable, max_dim: int = MAX_TOTAL_DIM) -> np.ndarray:
    out = None
    for op in ops:
        out = np.asarray(op, dtype=complex) if out is None else tensor(out, op, max_dim)
    if out is None:
        raise ArgumentError("empty operator list")
    return out


def embed(op, leg: int, leg_dims: Sequence[int]) -> np.ndarray:
    """Place ``op`` on one leg, identities elsewhere."""
    mats = [np.eye(d, dtype=complex) for d in leg_dims]
    mats[leg] = np.asarray(op, dtype=complex)
    return tensor_all(mats)


def partial_trace(s, keep: Iterable[int], leg_dims: Sequence[int] | None = None) -> QuantumState:
    """Reduce ``s`` to the legs in ``keep`` (kept in ascending leg order)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ArgumentError("keep must name at least one leg")
    if isinstance(s, QuantumState):
        dims = s.space.leg_dims
    elif leg_dims is None:
        raise ArgumentError("leg_dims required for raw arrays")
    else:
        dims = tuple(leg_dims)
    n = len(dims)
    if keep[0] < 0 or keep[-1] >= n:
        raise ArgumentError(f"keep {keep} outside legs 0..{n - 1}")

    kept_dims = tuple(dims[k] for k in keep)
    if isinstance(s, QuantumState) and s.is_pure:
        psi = s.data.reshape(dims)
        psi = np.moveaxis(psi, keep, range(len(keep)))
        m = psi.reshape(int(np.prod(kept_dims)), -1)
        red = m @ m.conj().T
    else:
        rho = as_density(s).reshape(dims + dims)
        letters = "abcdefghijklmnopqrstuvwxyz"
        row = list(letters[:n])
        col = list(letters[n:2 * n])
        for i in range(n):
            if i not in keep:
                col[i] = row[i]
        out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
        red = np.einsum("".join(row) + "".join(col) + "->" + out, rho)
        red = red.reshape(int(np.prod(kept_dims)), -1)
    red = 0.5 * (red + red.conj().T)
    return QuantumState(CompositeSpace(kept_dims), _frozen(red), False)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T

    def function(self, f) -> np.ndarray:
        u = self.eigenvectors
        return (u * f(self.eigenvalues)) @ u.conj().T


def spectral_decomposition(h) -> SpectralDecomposition:
    h = check_hermitian(h)
    w, u = np.linalg.eigh(0.5 * (h + h.conj().T))
    w.setflags(write=False)
    u.setflags(write=False)
    return SpectralDecomposition(w, u)


def propagator(h, t: float) -> np.ndarray:
    """exp(-i H t / hbar) via the spectral decomposition."""
    sd = spectral_decomposition(h)
    return sd.function(lambda w: np.exp(-1j * w * t / HBAR))


def evolve_exact(h, s, t: float):
    """Unitary evolution of a state (QuantumState, vector or density matrix)."""
    h = check_hermitian(h)
    u = propagator(h, t)
    if isinstance(s, QuantumState):
        if s.dim != h.shape[0]:
            raise ArgumentError("Hamiltonian and state dimensions differ")
        if s.is_pure:
            v = u @ s.data
            return QuantumState(s.space, _frozen(v / np.linalg.norm(v)), True)
        r = u @ s.data @ u.conj().T
        return QuantumState(s.space, _frozen(0.5 * (r + r.conj().T)), False)
    a = np.asarray(s, dtype=complex)
    if a.shape[0] != h.shape[0]:
        raise ArgumentError("Hamiltonian and state dimensions differ")
    if a.ndim == 1:
        return u @ a
    return u @ a @ u.conj().T


def operator_norm(a) -> float:
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, ord=2))


def psd_sqrt(rho) -> np.ndarray:
    """Square root of a positive semidefinite matrix.

    Eigenvalues below the eigensolver noise floor (d * eps * largest) are set
    to 0, which covers the small negative ones too.
    """
    rho = np.asarray(rho, dtype=complex)
    w, u = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    floor = w.size * np.finfo(float).eps * max(float(np.max(np.abs(w))), 0.0)
    w = np.where(w <= floor, 0.0, w)
    return (u * np.sqrt(w)) @ u.conj().T


def purify(rho) -> QuantumState:
    """Purification with the auxiliary leg appended last."""
    if isinstance(rho, QuantumState):
        space = rho.space
        r = rho.density()
    else:
        r = np.asarray(rho, dtype=complex)
        space = CompositeSpace((r.shape[0],))
    d = r.shape[0]
    w, u = np.linalg.eigh(0.5 * (r + r.conj().T))
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    v = (u * np.sqrt(w)).reshape(-1)
    return QuantumState(space.append(d), _frozen(v / np.linalg.norm(v)), True)


def schmidt_coefficients(psi, dims: tuple[int, int]) -> np.ndarray:
    m = np.asarray(psi if not isinstance(psi, QuantumState) else psi.data).reshape(dims)
    return np.sort(np.linalg.svd(m, compute_uv=False))[::-1]


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal (Hilbert-Schmidt) Hermitian basis built from symmetrized matrix units."""
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = 1 / np.sqrt(2)
            basis.append(e)
            f = np.zeros((d, d), dtype=complex)
            f[i, j] = -1j / np.sqrt(2)
            f[j, i] = 1j / np.sqrt(2)
            basis.append(f)
    return basis


# random specimens ---------------------------------------------------------

def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_pure(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
