"""Periodic 1D/2D grids, spectral translation and split-operator propagation.

Wavefunctions may carry a qubit leg in front of the spatial axes.  The qubit
components are expressed in the basis where the model's coupling is diagonal,
so each component ("branch") evolves independently.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ArgumentError, ConfigurationError, UnsupportedModelError
from .qcore import HBAR

LEAKAGE_LIMIT = 1e-6


@dataclass(frozen=True)
class GridSpec:
    n: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ConfigurationError(f"grid size must be a power of two >= 16, got {self.n}")
        if not self.x_max > self.x_min:
            raise ConfigurationError("grid needs x_max > x_min")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        """Angular wave numbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n + 1) - 0.5)


@dataclass(frozen=True)
class WaveFunction:
    grids: tuple[GridSpec, ...]
    psi: np.ndarray
    qubit: bool = False

    def __post_init__(self):
        grids = tuple(self.grids)
        if len(grids) not in (1, 2):
            raise ArgumentError("only 1D and 2D grids are supported")
        psi = np.array(self.psi, dtype=complex)
        shape = tuple(g.n for g in grids)
        expect = ((2,) + shape) if self.qubit else shape
        if psi.shape != expect:
            raise ArgumentError(f"amplitude shape {psi.shape} does not match grid {expect}")
        psi.setflags(write=False)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "psi", psi)

    @property
    def cell(self) -> float:
        return float(np.prod([g.dx for g in self.grids]))

    @property
    def offset(self) -> int:
        return 1 if self.qubit else 0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.cell))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grids, self.psi / self.norm(), self.qubit)

    def with_psi(self, psi) -> "WaveFunction":
        return WaveFunction(self.grids, psi, self.qubit)

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*[g.x for g in self.grids], indexing="ij")

    def branch(self, s: int) -> "WaveFunction":
        if not self.qubit:
            raise ArgumentError("wavefunction has no qubit leg")
        return WaveFunction(self.grids, self.psi[s], False)

    def inner(self, other: "WaveFunction") -> complex:
        return complex(np.vdot(self.psi, other.psi) * self.cell)


def with_qubit(amplitudes: Sequence[complex], branches: Sequence[WaveFunction]) -> WaveFunction:
    """Assemble sum_s c_s |s> (x) phi_s from per-branch wavefunctions."""
    grids = branches[0].grids
    psi = np.stack([c * b.psi for c, b in zip(amplitudes, branches)])
    return WaveFunction(grids, psi, True)


# smooth compactly supported profiles ---------------------------------------

_BUMP_UNIT_INTEGRAL = integrate.quad(lambda u: np.exp(1 - 1 / (1 - u * u)), -1, 1,
                                     epsabs=1e-14, epsrel=1e-12)[0]


_PANELS = 512
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class Bump:
    """h * exp(1 - 1/(1 - u^2)) on (a, b), u the affine map of (a, b) onto (-1, 1)."""

    a: float
    b: float
    height: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigurationError(f"bump support ({self.a}, {self.b}) is empty")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = (2 * x - (self.a + self.b)) / (self.b - self.a)
        out = np.zeros_like(x)
        m = np.abs(u) < 1
        out[m] = self.height * np.exp(1 - 1 / (1 - u[m] ** 2))
        return out

    @property
    def total(self) -> float:
        return self.height * 0.5 * (self.b - self.a) * _BUMP_UNIT_INTEGRAL

    def scaled(self, c: float) -> "Bump":
        """x -> c * f(c x): support shrinks by c, integral unchanged."""
        return Bump(self.a / c, self.b / c, self.height * c)

    def with_total(self, total: float) -> "Bump":
        return Bump(self.a, self.b, total / (0.5 * (self.b - self.a) * _BUMP_UNIT_INTEGRAL))

    @cached_property
    def _panels(self) -> tuple[np.ndarray, np.ndarray]:
        edges = np.linspace(self.a, self.b, _PANELS + 1)
        w = 0.5 * np.diff(edges)
        nodes = (edges[:-1] + w)[:, None] + w[:, None] * _GL_X[None, :]
        per = (self(nodes) * _GL_W[None, :]).sum(axis=1) * w
        return edges, np.concatenate([[0.0], np.cumsum(per)])

    def antiderivative(self, x) -> np.ndarray:
        """int_a^x f by composite Gauss-Legendre on a fixed panel table, vectorized over x."""
        x = np.asarray(x, dtype=float)
        flat = np.clip(x.reshape(-1), self.a, self.b)
        edges, cum = self._panels
        i = np.clip(np.searchsorted(edges, flat, side="right") - 1, 0, _PANELS - 1)
        lo = edges[i]
        w = 0.5 * (flat - lo)
        nodes = (lo + w)[:, None] + w[:, None] * _GL_X[None, :]
        part = (self(nodes) * _GL_W[None, :]).sum(axis=1) * w
        return (cum[i] + part).reshape(x.shape)

    def integral(self, lo, hi) -> np.ndarray:
        return self.antiderivative(hi) - self.antiderivative(lo)


def normalized_bump(a: float, b: float) -> Bump:
    """Bump with unit L2 norm."""
    unit = Bump(a, b, 1.0)
    l2 = integrate.quad(lambda x: unit(np.array(x)) ** 2, a, b, epsabs=1e-14, epsrel=1e-12)[0]
    return Bump(a, b, 1.0 / np.sqrt(l2))


def gaussian_packet(x, center: float, width: float, k0: float = 0.0) -> np.ndarray:
    return (np.pi ** -0.25 / np.sqrt(width)
            * np.exp(1j * k0 * (x - center) - (x - center) ** 2 / (2 * width ** 2)))


# spectral operations ---------------------------------------------------------

def _axis(psi: WaveFunction, axis: int) -> int:
    if not 0 <= axis < len(psi.grids):
        raise ArgumentError(f"axis {axis} out of range")
    return axis + psi.offset


def translate(psi: WaveFunction, a: float, axis: int = 0) -> WaveFunction:
    """Spectrally exact periodic shift x -> x + a, i.e. psi(x) -> psi(x - a)."""
    if a == 0:
        return psi
    ax = _axis(psi, axis)
    k = psi.grids[axis].k
    shape = [1] * psi.psi.ndim
    shape[ax] = k.size
    phase = np.exp(-1j * k * a).reshape(shape)
    return psi.with_psi(np.fft.ifft(np.fft.fft(psi.psi, axis=ax) * phase, axis=ax))


def apply_momentum(psi: WaveFunction, axis: int = 0) -> WaveFunction:
    """p psi = -i hbar d/dx psi, computed spectrally."""
    ax = _axis(psi, axis)
    k = psi.grids[axis].k
    shape = [1] * psi.psi.ndim
    shape[ax] = k.size
    return psi.with_psi(np.fft.ifft(np.fft.fft(psi.psi, axis=ax) * (HBAR * k).reshape(shape), axis=ax))


def momentum_moments(psi: WaveFunction, axis: int = 0) -> tuple[float, float]:
    """Mean and standard deviation of p along ``axis`` from the momentum-space density."""
    ax = _axis(psi, axis)
    k = HBAR * psi.grids[axis].k
    dens = np.abs(np.fft.fft(psi.psi, axis=ax)) ** 2
    other = tuple(i for i in range(dens.ndim) if i != ax)
    marg = dens.sum(axis=other) if other else dens
    marg = marg / marg.sum()
    mean = float(np.sum(k * marg))
    var = float(np.sum((k - mean) ** 2 * marg))
    return mean, float(np.sqrt(max(var, 0.0)))


def position_moments(psi: WaveFunction, axis: int = 0) -> tuple[float, float]:
    x = psi.grids[axis].x
    dens = np.abs(psi.psi) ** 2
    ax = _axis(psi, axis)
    other = tuple(i for i in range(dens.ndim) if i != ax)
    marg = dens.sum(axis=other) if other else dens
    marg = marg / marg.sum()
    mean = float(np.sum(x * marg))
    return mean, float(np.sqrt(max(np.sum((x - mean) ** 2 * marg), 0.0)))


def free_evolve(psi: WaveFunction, dispersion: Callable[..., np.ndarray], t: float) -> WaveFunction:
    """Exact evolution under a momentum-diagonal Hamiltonian ``dispersion(*k_mesh)``."""
    axes = tuple(range(psi.offset, psi.psi.ndim))
    ks = np.meshgrid(*[g.k for g in psi.grids], indexing="ij")
    phase = np.exp(-1j * dispersion(*ks) * t / HBAR)
    return psi.with_psi(np.fft.ifftn(np.fft.fftn(psi.psi, axes=axes) * phase, axes=axes))


def region_probability(psi: WaveFunction, predicate: Callable[..., np.ndarray]) -> float:
    """Probability mass on grid points where ``predicate(*coords)`` holds (node sum)."""
    mask = np.asarray(predicate(*psi.coords()), dtype=bool)
    dens = np.abs(psi.psi) ** 2
    if psi.qubit:
        dens = dens.sum(axis=0)
    return float(min(1.0, np.sum(dens[mask]) * psi.cell))


def interval_probability(psi: WaveFunction, lo: float | None = None, hi: float | None = None,
                         axis: int = 0) -> float:
    """Mass of the marginal density on [lo, hi) along ``axis``, integrated spectrally.

    The trigonometric interpolant of |psi|^2 is integrated in closed form, so a
    sharp region edge costs no O(dx) node-counting error (unlike
    :func:`region_probability`).  Open ends default to the domain edges.
    """
    g = psi.grids[axis]
    ax = _axis(psi, axis)
    dens = np.abs(psi.psi) ** 2
    other = tuple(i for i in range(dens.ndim) if i != ax)
    marg = dens.sum(axis=other) * (psi.cell / g.dx) if other else dens
    a = 0.0 if lo is None else float(np.clip(lo - g.x_min, 0.0, g.length))
    b = g.length if hi is None else float(np.clip(hi - g.x_min, 0.0, g.length))
    if b <= a:
        return 0.0
    c = np.fft.fft(marg) / g.n
    k = g.k
    nz = k != 0
    total = c[0].real * (b - a)
    total += np.sum(c[nz] * (np.exp(1j * k[nz] * b) - np.exp(1j * k[nz] * a)) / (1j * k[nz])).real
    return float(min(max(total, 0.0), 1.0))


def boundary_mass(psi: WaveFunction, width: float | Sequence[float]) -> float:
    """Probability within ``width`` of any periodic boundary (the leakage monitor)."""
    widths = np.broadcast_to(np.asarray(width, dtype=float), (len(psi.grids),))
    coords = psi.coords()
    mask = np.zeros(coords[0].shape, dtype=bool)
    for g, c, w in zip(psi.grids, coords, widths):
        mask |= (c < g.x_min + w) | (c > g.x_max - g.dx - w)
    dens = np.abs(psi.psi) ** 2
    if psi.qubit:
        dens = dens.sum(axis=0)
    return float(np.sum(dens[mask]) * psi.cell)


# split-operator propagation ---------------------------------------------------

@dataclass(frozen=True)
class Splitting:
    """H_branch(b) = kinetic(b, *k) + mixed(b, *mixed_coords).

    ``kinetic`` is diagonal in full momentum representation.  ``mixed`` is
    diagonal in a representation where the axes listed in ``momentum_axes``
    are Fourier transformed and the rest stay in position space; the mixed
    callable receives k values on those axes and x values on the others.
    """

    kinetic: Callable[..., np.ndarray]
    mixed: Callable[..., np.ndarray] | None = None
    momentum_axes: tuple[int, ...] = ()
    max_group_velocity: float = 1.0


@dataclass
class Propagation:
    psi: WaveFunction
    steps: int
    dt: float
    norm_drift: float
    leakage: float = field(default=0.0)


def choose_dt(grids: Sequence[GridSpec], max_velocity: float, cap: float | None = None) -> float:
    dx = min(g.dx for g in grids)
    dt = dx / (4 * max(max_velocity, 1e-300))
    return min(dt, cap) if cap else dt


def split_step_evolve(model, psi: WaveFunction, t_final: float, dt: float | None = None,
                      coupling_values: Sequence[float] | None = None) -> Propagation:
    """Strang splitting: half kinetic, full mixed, half kinetic.

    ``model`` needs ``splitting`` (a :class:`Splitting`) and, for qubit
    wavefunctions, ``coupling_values`` (one per branch).  A bare
    :class:`Splitting` is accepted too.
    """
    split = model if isinstance(model, Splitting) else getattr(model, "splitting", None)
    if split is None:
        raise UnsupportedModelError("model declares no split-step decomposition")
    if coupling_values is None:
        coupling_values = getattr(model, "coupling_values", (0.0, 0.0))
    if t_final < 0:
        raise ArgumentError("t_final must be nonnegative")
    if dt is None:
        dt = choose_dt(psi.grids, split.max_group_velocity)
    if dt <= 0:
        raise ArgumentError("dt must be positive")
    steps = int(np.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    if steps == 0:
        return Propagation(psi, 0, 0.0, 0.0)
    h = t_final / steps
    n0 = psi.norm()

    ks = np.meshgrid(*[g.k for g in psi.grids], indexing="ij")
    mixed_coords = np.meshgrid(*[g.k if i in split.momentum_axes else g.x
                                 for i, g in enumerate(psi.grids)], indexing="ij")
    spatial = tuple(range(len(psi.grids)))
    mixed_axes = tuple(a for a in spatial if a in split.momentum_axes)

    values = list(coupling_values) if psi.qubit else [coupling_values[0]]
    arrays = psi.psi if psi.qubit else psi.psi[None]
    out = []
    for b, a in zip(values, arrays):
        half_kin = np.exp(-0.5j * h * split.kinetic(b, *ks) / HBAR)
        mix = None
        if split.mixed is not None:
            mix = np.exp(-1j * h * split.mixed(b, *mixed_coords) / HBAR)
        ak = np.fft.fftn(a)
        for _ in range(steps):
            ak *= half_kin
            if mix is not None:
                a = np.fft.ifftn(ak)
                if mixed_axes:
                    a = np.fft.fftn(a, axes=mixed_axes)
                a *= mix
                if mixed_axes:
                    a = np.fft.ifftn(a, axes=mixed_axes)
                ak = np.fft.fftn(a)
            ak *= half_kin
        out.append(np.fft.ifftn(ak))
    new = psi.with_psi(np.stack(out) if psi.qubit else out[0])
    return Propagation(new, steps, h, abs(new.norm() - n0))


def export_csv(psi: WaveFunction, path) -> None:
    """Snapshot as CSV rows: [branch,] x[, z], Re psi, Im psi."""
    coords = [c.reshape(-1) for c in psi.coords()]
    names = ["x", "z"][: len(coords)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["branch"] if psi.qubit else []) + names + ["re", "im"])
        branches = range(2) if psi.qubit else [None]
        for s in branches:
            amp = (psi.psi[s] if s is not None else psi.psi).reshape(-1)
            for i in range(amp.size):
                row = ([s] if s is not None else []) + [f"{c[i]:.12g}" for c in coords]
                w.writerow(row + [f"{amp[i].real:.12g}", f"{amp[i].imag:.12g}"])
