"""Measurement and timing-device models.

Two families share one duck-typed surface (``kind``, ``tau``, ``pvm``,
``meter``, ``restricted_state``, ``outcome_probabilities`` ...):

* :class:`FiniteModel` -- dense matrices on C^dS (x) C^dA.
* :class:`GridModel` -- a qubit coupled to a 1D/2D grid particle through
  ``V = B (x) W`` with ``B`` diagonalized, so each eigenvalue ``b`` of ``B``
  labels a branch evolving under ``H_A + b W``.

Qubit models use sigma_z = |1><1| - |0><0|: |0> carries coupling -1 and
|1> carries +1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import grids as gr
from .errors import ArgumentError, ConfigurationError, ProtocolError, ValidationError
from .grids import Bump, GridSpec, Splitting, WaveFunction
from .metrics import HistogramDistribution, SpectralDistribution
from .qcore import (
    HBAR, CompositeSpace, as_density, check_hermitian, partial_trace, propagator,
    purify, random_hermitian, random_pure, tensor,
)

SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)
KET = (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex))
COMPUTATIONAL_PVM = (np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex))

VALIDATION_TOL = 1e-9


def _check_povm(elements: Sequence[np.ndarray], name: str) -> None:
    total = sum(elements)
    if np.max(np.abs(total - np.eye(total.shape[0]))) > VALIDATION_TOL:
        raise ValidationError(f"{name} elements do not sum to the identity")
    for e in elements:
        check_hermitian(e, name=name)
        if np.linalg.eigvalsh(e).min() < -VALIDATION_TOL:
            raise ValidationError(f"{name} element is not positive")


def _check_pvm(elements: Sequence[np.ndarray]) -> None:
    _check_povm(elements, "pvm")
    for p in elements:
        if np.max(np.abs(p @ p - p)) > VALIDATION_TOL:
            raise ValidationError("pvm element is not a projection")


def fourier_family(n: int) -> list[np.ndarray]:
    """Conjugate states (1/sqrt N) sum_m exp(2 pi i k m / N) |m>, k = 0..N-1."""
    m = np.arange(n)
    return [np.exp(2j * np.pi * k * m / n) / np.sqrt(n) for k in range(n)]


# finite-dimensional models ---------------------------------------------------

@dataclass(frozen=True)
class FiniteModel:
    name: str
    h_s: np.ndarray
    h_a: np.ndarray
    v: np.ndarray
    sigma0: np.ndarray
    tau: float | None = None
    pvm: tuple[np.ndarray, ...] | None = None
    meter: tuple[np.ndarray, ...] | None = None
    t0: float = 0.0
    notes: tuple[str, ...] = ()
    params: dict = field(default_factory=dict, compare=False)

    kind = "finite"

    def __post_init__(self):
        for attr in ("h_s", "h_a", "v", "sigma0"):
            a = np.array(getattr(self, attr), dtype=complex)
            a.setflags(write=False)
            object.__setattr__(self, attr, a)
        self.validate()

    def validate(self) -> None:
        check_hermitian(self.h_s, name="H_S")
        check_hermitian(self.h_a, name="H_A")
        check_hermitian(self.v, name="V")
        if self.v.shape != (self.dim, self.dim):
            raise ValidationError("V must act on the joint space")
        s = self.sigma0
        if abs(np.trace(s).real - 1) > VALIDATION_TOL or np.linalg.eigvalsh(s).min() < -VALIDATION_TOL:
            raise ValidationError("sigma0 is not a density operator")
        if self.meter is not None:
            _check_povm(self.meter, "meter")
        if self.pvm is not None:
            _check_pvm(self.pvm)

    @property
    def d_s(self) -> int:
        return self.h_s.shape[0]

    @property
    def d_a(self) -> int:
        return self.h_a.shape[0]

    @property
    def dim(self) -> int:
        return self.d_s * self.d_a

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace((self.d_s, self.d_a))

    @cached_property
    def free_hamiltonian(self) -> np.ndarray:
        return tensor(self.h_s, np.eye(self.d_a)) + tensor(np.eye(self.d_s), self.h_a)

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        return self.free_hamiltonian + self.v

    @property
    def v_norm(self) -> float:
        return float(np.linalg.norm(self.v, ord=2))

    def sigma(self, t: float) -> np.ndarray:
        """Freely evolved apparatus state sigma(t)."""
        u = propagator(self.h_a, t - self.t0)
        return u @ self.sigma0 @ u.conj().T

    def joint_state(self, rho_in, t: float) -> np.ndarray:
        rho = as_density(rho_in)
        u = propagator(self.hamiltonian, t - self.t0)
        return u @ tensor(rho, self.sigma0) @ u.conj().T

    def restricted_state(self, rho_in, t: float, **_) -> np.ndarray:
        return partial_trace(self.joint_state(rho_in, t), [0], (self.d_s, self.d_a)).density()

    def free_system_state(self, rho_in, t: float) -> np.ndarray:
        u = propagator(self.h_s, t - self.t0)
        return u @ as_density(rho_in) @ u.conj().T

    def effect_operators(self, t: float, **_) -> list[np.ndarray]:
        """System effects M_n with P(n|rho) = tr[rho M_n]."""
        if self.meter is None:
            raise ProtocolError(f"model {self.name!r} has no meter")
        u = propagator(self.hamiltonian, t - self.t0)
        out = []
        for e in self.meter:
            heis = u.conj().T @ tensor(np.eye(self.d_s), e) @ u
            m = np.einsum("iajb,ba->ij", heis.reshape(self.d_s, self.d_a, self.d_s, self.d_a),
                          self.sigma0)
            out.append(0.5 * (m + m.conj().T))
        return out

    def apparatus_energy_fluctuation(self) -> float:
        from .metrics import energy_fluctuation
        return energy_fluctuation(self.h_a, self.sigma0)

    def apparatus_spectrum(self) -> SpectralDistribution:
        return SpectralDistribution.of_state(self.h_a, self.sigma0)

    def purified(self) -> "FiniteModel":
        """Same dynamics with sigma0 purified onto an appended auxiliary leg."""
        psi = purify(self.sigma0).vector()
        d = self.d_a
        h_a = tensor(self.h_a, np.eye(d))
        v = tensor(self.v, np.eye(d))
        meter = None if self.meter is None else tuple(tensor(e, np.eye(d)) for e in self.meter)
        return FiniteModel(self.name + "+purified", self.h_s, h_a, v, np.outer(psi, psi.conj()),
                           self.tau, self.pvm, meter, self.t0, self.notes, dict(self.params))


def random_finite_model(d_s: int, d_a: int, seed: int) -> FiniteModel:
    """Random dynamics specimen: Hermitian H_S, H_A, V with ||V|| = 1 and a random pure sigma0."""
    if d_s * d_a > 64:
        raise ConfigurationError("random finite models are limited to d_S * d_A <= 64")
    rng = np.random.default_rng(seed)
    h_s = random_hermitian(d_s, rng)
    h_a = random_hermitian(d_a, rng)
    v = random_hermitian(d_s * d_a, rng)
    v = v / np.linalg.norm(v, ord=2)
    phi = random_pure(d_a, rng)
    return FiniteModel(f"random(d_s={d_s},d_a={d_a},seed={seed})", h_s, h_a, v,
                       np.outer(phi, phi.conj()), params={"d_s": d_s, "d_a": d_a, "seed": seed})


def free_model(d_s: int = 2, d_a: int = 2, tau: float = 1.0) -> FiniteModel:
    """V = 0 with a coin-flip meter {I/2, I/2}."""
    half = np.eye(d_a, dtype=complex) / 2
    pvm = tuple(np.diag(np.eye(d_s)[i]).astype(complex) for i in range(d_s))
    meter = (half, half) + tuple(np.zeros((d_a, d_a), complex) for _ in range(d_s - 2))
    sigma0 = np.zeros((d_a, d_a), complex)
    sigma0[0, 0] = 1
    return FiniteModel("free", np.zeros((d_s, d_s)), np.zeros((d_a, d_a)),
                       np.zeros((d_s * d_a, d_s * d_a)), sigma0, tau, pvm, meter,
                       params={"d_s": d_s, "d_a": d_a, "tau": tau})


def controlled_shift_model(n: int = 2, coupling: float = 1.0) -> FiniteModel:
    """Perfect n-outcome measurement: at tau = pi/coupling the apparatus |0> becomes |m>.

    V = coupling * sum_m |m><m| (x) K_m with exp(-i pi K_m) = X^m (cyclic shift),
    H_S = H_A = 0.  For n = 2 this is the CNOT generator (|1><1| (x) (I - X)/2).
    """
    # X|k> = |k+1> has eigenvectors f_j = sum_k exp(-2 pi i j k / n)|k>/sqrt(n), eigenvalue exp(2 pi i j / n)
    j = np.arange(n)
    f = np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)  # column j is f_j
    blocks = []
    for m in range(n):
        # eigenvalues c in (-1, 1] with exp(-i pi c) = exp(2 pi i j m / n)
        c = np.mod(-2.0 * j * m / n + 1.0, 2.0) - 1.0
        blocks.append((f * c) @ f.conj().T)
    v = sum(tensor(np.diag(np.eye(n)[m]).astype(complex), blocks[m]) for m in range(n))
    v = coupling * v
    pvm = tuple(np.diag(np.eye(n)[m]).astype(complex) for m in range(n))
    meter = pvm
    sigma0 = np.diag(np.eye(n)[0]).astype(complex)
    return FiniteModel(f"controlled_shift(n={n})", np.zeros((n, n)), np.zeros((n, n)), v, sigma0,
                       np.pi / coupling, pvm, meter, params={"n": n, "coupling": coupling})


def rotation_meter_model(coupling: float = 1.0) -> FiniteModel:
    """V = coupling * sigma_z (x) sigma_y; perfect at tau = pi/(4 coupling), saturating ||V|| tau = pi/4."""
    from .qcore import SY, SZ
    v = coupling * tensor(SZ, SY)
    plus = np.array([1, 1], complex) / np.sqrt(2)
    minus = np.array([1, -1], complex) / np.sqrt(2)
    # sigma_z = +1 (index 0 here) rotates |0> to |+>
    meter = (np.outer(plus, plus.conj()), np.outer(minus, minus.conj()))
    sigma0 = np.diag([1.0, 0.0]).astype(complex)
    return FiniteModel("rotation_meter", np.zeros((2, 2)), np.zeros((2, 2)), v, sigma0,
                       np.pi / (4 * coupling), COMPUTATIONAL_PVM, meter,
                       params={"coupling": coupling})


# grid models -------------------------------------------------------------------

Predicate = Callable[..., np.ndarray]


@dataclass(frozen=True)
class GridModel:
    name: str
    phi0: WaveFunction
    coupling_values: tuple[float, ...]
    system_basis: np.ndarray
    dispersion: Callable[..., np.ndarray]
    splitting: Splitting
    coupling: Callable[[WaveFunction], WaveFunction]
    packet_width: float
    tau: float | None = None
    pvm: tuple[np.ndarray, ...] | None = None
    meter: tuple[Predicate, ...] | None = None
    exact_branch: Callable[[float, float], np.ndarray] | None = None
    exact_free: Callable[[float], np.ndarray] | None = None
    energy_state: WaveFunction | None = None
    energy_dispersion: Callable[..., np.ndarray] | None = None
    interaction_support: tuple[float, float] | None = None
    packet_support: Callable[[float], tuple[float, float]] | None = None
    t0: float = 0.0
    notes: tuple[str, ...] = ()
    params: dict = field(default_factory=dict, compare=False)
    dt: float | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    kind = "grid"
    d_s = 2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        s = np.asarray(self.system_basis)
        if np.max(np.abs(s.conj().T @ s - np.eye(2))) > VALIDATION_TOL:
            raise ValidationError("system basis is not unitary")
        if abs(self.phi0.norm() - 1) > 1e-9:
            raise ValidationError(f"initial apparatus state has norm {self.phi0.norm()!r}")
        if self.pvm is not None:
            _check_pvm(self.pvm)
        if self.meter is not None:
            masks = [np.asarray(m(*self.phi0.coords()), dtype=bool) for m in self.meter]
            if not np.all(np.sum(masks, axis=0) == 1):
                raise ValidationError("meter regions must partition the grid")

    @property
    def grids(self) -> tuple[GridSpec, ...]:
        return self.phi0.grids

    @property
    def coupling_operator(self) -> np.ndarray:
        """B in the computational basis."""
        s = self.system_basis
        return (s * np.asarray(self.coupling_values)) @ s.conj().T

    def to_coupling_basis(self, rho) -> np.ndarray:
        s = self.system_basis
        return s.conj().T @ as_density(rho) @ s

    def from_coupling_basis(self, rho) -> np.ndarray:
        s = self.system_basis
        return s @ rho @ s.conj().T

    # apparatus states ------------------------------------------------------
    def free_state(self, t: float) -> WaveFunction:
        """sigma(t) under H_A alone (closed form when the model has one)."""
        if self.exact_free is not None:
            return self.phi0.with_psi(self.exact_free(t - self.t0))
        return gr.free_evolve(self.phi0, self.dispersion, t - self.t0)

    def has_exact(self) -> bool:
        return self.exact_branch is not None

    def with_dt(self, dt: float | None) -> "GridModel":
        """Copy with a split-step time-step cap (fresh branch cache)."""
        if dt is not None and not dt > 0:
            raise ArgumentError("dt must be positive")
        return replace(self, dt=dt, _cache={})

    def step_size(self, dt: float | None = None) -> float:
        base = gr.choose_dt(self.grids, self.splitting.max_group_velocity)
        cap = dt if dt is not None else self.dt
        return min(base, cap) if cap else base

    def richardson_error(self, t: float) -> float:
        """Time-step error estimate ||psi_h - psi_{h/2}|| * 4/3 for Strang splitting at t."""
        h = self.step_size()
        coarse = self.branch_trajectory([t], "split", h)[0]
        fine = self.branch_trajectory([t], "split", h / 2)[0]
        return max((a.with_psi(a.psi - b.psi)).norm() for a, b in zip(coarse, fine)) * 4 / 3

    def branch_trajectory(self, times: Sequence[float], method: str = "auto",
                          dt: float | None = None) -> list[list[WaveFunction]]:
        """Branch wavefunctions at each time >= t0; split-step runs incrementally."""
        method = self._method(method)
        dt = self.step_size(dt)
        times = [float(t) for t in times]
        if any(t < self.t0 for t in times):
            raise ArgumentError("branch evolution starts at t0")
        if method == "exact":
            # sampling a closed form is a quadrature; renormalize on the grid
            return [[self.phi0.with_psi(self.exact_branch(b, t - self.t0)).normalized()
                     for b in self.coupling_values] for t in times]
        order = np.argsort(times, kind="stable")
        out: list = [None] * len(times)
        psi = gr.with_qubit([1.0, 1.0], [self.phi0, self.phi0])
        now = self.t0
        for i in order:
            prop = gr.split_step_evolve(self, psi, times[i] - now, dt)
            psi, now = prop.psi, times[i]
            out[i] = [psi.branch(0), psi.branch(1)]
        return out

    def branch_states(self, t: float, method: str = "auto", dt: float | None = None) -> list[WaveFunction]:
        key = (float(t), self._method(method), self.step_size(dt))
        if key not in self._cache:
            self._cache[key] = self.branch_trajectory([t], method, dt)[0]
        return self._cache[key]

    def _method(self, method: str) -> str:
        if method == "auto":
            return "exact" if self.exact_branch is not None else "split"
        if method == "exact" and self.exact_branch is None:
            raise ArgumentError(f"model {self.name!r} has no closed-form evolution")
        if method not in ("exact", "split"):
            raise ArgumentError(f"unknown propagation method {method!r}")
        return method

    # system-side quantities -------------------------------------------------
    def restricted_state(self, rho_in, t: float, method: str = "auto", dt: float | None = None) -> np.ndarray:
        """System state from branch overlaps: rho_ss' <phi_s'|phi_s>."""
        r = self.to_coupling_basis(rho_in)
        br = self.branch_states(t, method, dt)
        g = np.array([[br[j].inner(br[i]) for j in range(2)] for i in range(2)])
        return self.from_coupling_basis(r * g)

    def free_system_state(self, rho_in, t: float) -> np.ndarray:
        return as_density(rho_in)

    def effect_operators(self, t: float, method: str = "auto", dt: float | None = None) -> list[np.ndarray]:
        if self.meter is None:
            raise ProtocolError(f"model {self.name!r} has no meter")
        br = self.branch_states(t, method, dt)
        out = []
        for pred in self.meter:
            probs = [gr.region_probability(b, pred) for b in br]
            out.append(self.from_coupling_basis(np.diag(probs).astype(complex)))
        return out

    def leakage(self, t: float, method: str = "auto", dt: float | None = None) -> float:
        return max(gr.boundary_mass(b, self.packet_width) for b in self.branch_states(t, method, dt))

    def apparatus_energy_fluctuation(self) -> float:
        """Spectral standard deviation of H_A in sigma(t0)."""
        psi = self.energy_state if self.energy_state is not None else self.phi0
        disp = self.energy_dispersion if self.energy_dispersion is not None else self.dispersion
        ks = np.meshgrid(*[g.k for g in psi.grids], indexing="ij")
        e = disp(*ks)
        dens = np.abs(np.fft.fftn(psi.psi)) ** 2
        dens = dens / dens.sum()
        mean = np.sum(e * dens)
        return float(np.sqrt(max(np.sum((e - mean) ** 2 * dens), 0.0)))

    def apparatus_spectrum(self) -> HistogramDistribution:
        """Histogram of the H_A spectral density (1D energy probes only)."""
        psi = self.energy_state if self.energy_state is not None else self.phi0
        disp = self.energy_dispersion if self.energy_dispersion is not None else self.dispersion
        if len(psi.grids) != 1:
            raise ArgumentError("spectral histogram needs a 1D energy probe")
        k = np.fft.fftshift(psi.grids[0].k)
        dens = np.fft.fftshift(np.abs(np.fft.fft(psi.psi)) ** 2)
        e = disp(k)
        order = np.argsort(e, kind="stable")
        e, dens = e[order], dens[order]
        # each k sample is one bin of width dk in momentum; map edges through the dispersion
        if not np.all(np.diff(e) > 0):
            raise ArgumentError("spectral histogram needs a strictly monotone dispersion")
        mid = 0.5 * (e[1:] + e[:-1])
        edges = np.concatenate([[e[0] - (mid[0] - e[0])], mid, [e[-1] + (e[-1] - mid[-1])]])
        return HistogramDistribution(edges, dens)


def _branch_basis(b_op) -> tuple[tuple[float, ...], np.ndarray]:
    b_op = check_hermitian(b_op, name="B")
    w, u = np.linalg.eigh(b_op)
    return tuple(float(x) for x in w), u


def _grid_around(lo: float, hi: float, n: int) -> GridSpec:
    return GridSpec(n, lo, hi)


def standard_model(pointer_width: float = 0.05, tau: float = 1.0, grid_n: int = 1024,
                   grid: GridSpec | None = None) -> GridModel:
    """H_S = H_A = 0, V = sigma_z (x) p, Gaussian pointer at 0, half-line meter."""
    if pointer_width <= 0 or tau <= 0:
        raise ConfigurationError("pointer_width and tau must be positive")
    reach = tau + 10 * pointer_width
    if grid is None:
        grid = GridSpec(grid_n, -1.5 * reach, 1.5 * reach)
    if grid.x_min > -reach or grid.x_max - grid.dx < reach:
        raise ConfigurationError("pointer too wide for grid: packet would reach the boundary")
    if pointer_width < 4 * grid.dx:
        raise ConfigurationError("pointer narrower than four grid cells")
    x = grid.x

    def exact_branch(b, t):
        return gr.gaussian_packet(x - b * t, 0.0, pointer_width)

    phi0 = WaveFunction((grid,), gr.gaussian_packet(x, 0.0, pointer_width)).normalized()
    return GridModel(
        name="standard",
        phi0=phi0,
        coupling_values=(-1.0, 1.0),
        system_basis=np.eye(2, dtype=complex),
        dispersion=lambda k: np.zeros_like(k),
        splitting=Splitting(kinetic=lambda b, k: b * HBAR * k, max_group_velocity=1.0),
        coupling=lambda psi: gr.apply_momentum(psi, 0),
        packet_width=4 * pointer_width,
        tau=tau,
        pvm=COMPUTATIONAL_PVM,
        meter=(lambda x: x < 0, lambda x: x >= 0),
        exact_branch=exact_branch,
        exact_free=lambda t: gr.gaussian_packet(x, 0.0, pointer_width),
        params={"pointer_width": pointer_width, "tau": tau, "grid_n": grid.n},
    )


def chiral_model(g: Bump | None = None, phi0: Bump | None = None, delta: float = 1.0,
                 Delta: float = 1.0, grid_n: int = 2048) -> GridModel:
    """Timing device: H_A = p, V = sigma_z (x) g(q), packet supported in (-delta, 0).

    ``tau = Delta + delta``.  Branch b picks up the phase
    exp(-i b int_{x-t}^{x} g / hbar); the branches differ only by phase, so this
    is a switch, not a which-path measurement.  The meter splits the line at the
    packet's free centre at ``tau`` and is there only to exercise the protocol.
    """
    g = Bump(0.0, Delta, 1.0) if g is None else g
    phi0 = gr.normalized_bump(-delta, 0.0) if phi0 is None else phi0
    if g.a < 0:
        raise ConfigurationError("interaction profile must be supported in (0, Delta)")
    if phi0.b > 0:
        raise ConfigurationError("initial packet must be supported on the negative half-line")
    Delta, delta = g.b, -phi0.a
    tau = Delta + delta
    grid = GridSpec(grid_n, -2 * tau - delta, 2 * tau + delta)
    x = grid.x
    amp = phi0(x)
    outside = np.sum(amp[(x <= phi0.a) | (x >= phi0.b)] ** 2) * grid.dx
    if outside > 1e-12:
        raise ConfigurationError("initial packet leaves its declared support")
    centre = float(np.sum(x * amp ** 2) / np.sum(amp ** 2))

    def exact_branch(b, t):
        phase = -b * g.integral(x - t, x) / HBAR
        return phi0(x - t) * np.exp(1j * phase)

    psi0 = WaveFunction((grid,), amp.astype(complex))
    return GridModel(
        name="chiral",
        phi0=psi0.normalized(),
        coupling_values=(-1.0, 1.0),
        system_basis=np.eye(2, dtype=complex),
        dispersion=lambda k: HBAR * k,
        splitting=Splitting(kinetic=lambda b, k: HBAR * k, mixed=lambda b, xx: b * g(xx),
                            max_group_velocity=1.0),
        coupling=lambda psi: psi.with_psi(g(psi.coords()[0]) * psi.psi),
        packet_width=delta,
        tau=tau,
        pvm=COMPUTATIONAL_PVM,
        meter=(lambda xx: xx < centre + tau, lambda xx: xx >= centre + tau),
        exact_branch=exact_branch,
        exact_free=lambda t: phi0(x - t).astype(complex),
        interaction_support=(g.a, g.b),
        packet_support=lambda t: (phi0.a + t, phi0.b + t),
        params={"delta": delta, "Delta": Delta, "g_height": g.height, "grid_n": grid_n,
                "phase_total": g.total / HBAR},
    )


@dataclass(frozen=True)
class GaussianPacketParams:
    """Free Gaussian packet prepared at lead time T before t0 = 0."""

    m: float = 1.0
    k: float = 4.0
    sigma: float = 1.0
    Delta: float = 0.5
    T: float = 1.0

    def __post_init__(self):
        for name in ("m", "k", "sigma", "Delta", "T"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")

    @property
    def v_g(self) -> float:
        return HBAR * self.k / self.m

    @property
    def x0(self) -> float:
        return -self.v_g * (self.T + self.Delta)

    def mean_position(self, s) -> np.ndarray:
        """<q> at time s after preparation."""
        return self.x0 + self.v_g * np.asarray(s, dtype=float)

    def spread_formula(self, s) -> np.ndarray:
        """sigma (1 + hbar^2 s^2 / (sigma^4 m^2))^(1/2), the usual packet-width closed form.

        It is sqrt(2) times the standard deviation of |phi|^2; see :meth:`spread`.
        """
        s = np.asarray(s, dtype=float)
        return self.sigma * np.sqrt(1 + (HBAR * s / (self.sigma ** 2 * self.m)) ** 2)

    def spread(self, s) -> np.ndarray:
        """Standard deviation of |phi|^2 for this packet: spread_formula / sqrt(2)."""
        return self.spread_formula(s) / np.sqrt(2)

    def chebyshev_bound(self, s, per_time: bool = False) -> np.ndarray:
        """Upper bound on ||P_>= phi||^2 at time s <= T after preparation.

        Default uses the worst-case distance v_g * Delta; ``per_time`` uses the
        actual distance |x0 + v_g s| to the origin.
        """
        var = self.spread_formula(s) ** 2
        dist = np.abs(self.mean_position(s)) if per_time else self.v_g * self.Delta
        return var / dist ** 2

    def packet(self, s: float, x) -> np.ndarray:
        """Closed-form free evolution of the prepared Gaussian."""
        x = np.asarray(x, dtype=float)
        a = 1 + 1j * HBAR * s / (self.sigma ** 2 * self.m)
        d = x - self.x0
        expo = (-(d ** 2) / (2 * self.sigma ** 2) + 1j * self.k * d
                - 1j * s * HBAR * self.k ** 2 / (2 * self.m)) / a
        return np.exp(expo) / (np.pi ** 0.25 * np.sqrt(self.sigma) * np.sqrt(a))


def gaussian_model(p: GaussianPacketParams | None = None, B=None, V_profile: Bump | None = None,
                   grid_n: int | None = None, horizon: float | None = None) -> GridModel:
    """Lower-bounded H_A = p^2/2m, V = B (x) V(q) with supp V in (0, inf).

    Not an exact switch: the packet's tail reaches supp V before t0 = 0 with
    probability bounded by ``p.chebyshev_bound``.  ``horizon`` sizes the grid
    for evolution past t0 (default 2 * Delta / v_g * ...).
    """
    p = GaussianPacketParams() if p is None else p
    B = np.array([[0, 1], [1, 0]], dtype=complex) if B is None else np.asarray(B, dtype=complex)
    V_profile = Bump(0.0, 2.0 * p.sigma, 1.0) if V_profile is None else V_profile
    if V_profile.a < 0:
        raise ConfigurationError("V(q) must be supported in (0, inf)")
    values, basis = _branch_basis(B)
    horizon = 3 * p.Delta if horizon is None else horizon
    s_max = p.T + horizon
    width_end = float(p.spread(s_max))
    lo = p.x0 - 14 * float(p.spread(0)) - 6 * width_end
    hi = max(p.mean_position(s_max) + 14 * width_end, V_profile.b + 4 * p.sigma)
    # resolve the carrier wave number and the packet's momentum width
    kmax = p.k + 14 / p.sigma
    need = int(np.ceil((hi - lo) * kmax / np.pi * 1.5))
    n = grid_n or max(1024, 1 << (need - 1).bit_length())
    grid = GridSpec(n, lo, hi)
    x = grid.x
    phi_t0 = WaveFunction((grid,), p.packet(p.T, x)).normalized()

    return GridModel(
        name="gaussian",
        phi0=phi_t0,
        coupling_values=values,
        system_basis=basis,
        dispersion=lambda k: (HBAR * k) ** 2 / (2 * p.m),
        splitting=Splitting(kinetic=lambda b, k: (HBAR * k) ** 2 / (2 * p.m),
                            mixed=lambda b, xx: b * V_profile(xx),
                            max_group_velocity=HBAR * kmax / p.m),
        coupling=lambda psi: psi.with_psi(V_profile(psi.coords()[0]) * psi.psi),
        packet_width=4 * p.sigma,
        exact_free=lambda t: p.packet(p.T + t, x),
        interaction_support=(V_profile.a, V_profile.b),
        params={"m": p.m, "k": p.k, "sigma": p.sigma, "Delta": p.Delta, "T": p.T,
                "grid_n": n, "packet": p},
    )


def stern_gerlach_2d(g: Bump | None = None, xi: Bump | None = None, eta: Bump | None = None,
                     delta: float = 1.0, Delta: float = 1.0, epsilon: float = 0.25,
                     scale: float = 1.0, grid_nx: int = 256, grid_nz: int = 256,
                     energy_n: int = 2048, kick: float | None = None) -> GridModel:
    """H = sigma_z g(q_x) p_z + p_x with phi(0, x, z) = xi(x) eta(z).

    ``scale`` = C rescales the apparatus: xi -> sqrt(C) xi(C x) and
    g -> C g(C x), so tau -> tau / C and Delta H_A -> C Delta H_A while the
    total z-kick int g (and hence the epsilon condition) is unchanged.
    ``kick`` sets int g for the default g (default 4 * epsilon).
    """
    if scale <= 0:
        raise ConfigurationError("scale must be positive")
    g = Bump(0.0, delta, 1.0).with_total(4 * epsilon if kick is None else kick) if g is None else g
    xi = gr.normalized_bump(-Delta, 0.0) if xi is None else xi
    eta = gr.normalized_bump(-epsilon, epsilon) if eta is None else eta
    if g.a < 0 or xi.b > 0:
        raise ConfigurationError("need supp g in (0, delta) and supp xi in (-Delta, 0)")
    if abs(eta.a + eta.b) > 1e-15:
        raise ConfigurationError("eta must be even")
    eps = eta.b
    kick = g.total
    if not eps < kick:
        raise ConfigurationError(
            f"epsilon condition violated: need epsilon={eps:g} < int g = {kick:g}")
    g = g.scaled(scale)
    xi = Bump(xi.a / scale, xi.b / scale, xi.height * np.sqrt(scale))
    delta_s, Delta_s = g.b, -xi.a
    tau = delta_s + Delta_s

    margin = 0.25 * tau
    gx = GridSpec(grid_nx, xi.a - margin, 2 * tau + margin)
    zr = 1.6 * (kick + eps)
    gz = GridSpec(grid_nz, -zr, zr)
    X, Z = np.meshgrid(gx.x, gz.x, indexing="ij")
    xs = gx.x

    def exact_branch(b, t):
        shift = b * g.integral(xs - t, xs)
        return xi(X - t) * eta(Z - shift[:, None])

    phi0 = WaveFunction((gx, gz), (xi(X) * eta(Z)).astype(complex)).normalized()

    def coupling(psi):
        pz = gr.apply_momentum(psi, 1)
        xx = psi.coords()[0]
        return pz.with_psi(g(xx) * pz.psi)

    ge = GridSpec(energy_n, xi.a - 0.5 * Delta_s, xi.b + 0.5 * Delta_s)
    energy_state = WaveFunction((ge,), xi(ge.x).astype(complex)).normalized()

    return GridModel(
        name="stern_gerlach_2d",
        phi0=phi0,
        coupling_values=(-1.0, 1.0),
        system_basis=np.eye(2, dtype=complex),
        dispersion=lambda kx, kz: HBAR * kx,
        splitting=Splitting(kinetic=lambda b, kx, kz: HBAR * kx,
                            mixed=lambda b, xx, kz: b * g(xx) * HBAR * kz,
                            momentum_axes=(1,), max_group_velocity=1.0),
        coupling=coupling,
        packet_width=min(Delta_s, eps),
        tau=tau,
        pvm=COMPUTATIONAL_PVM,
        meter=(lambda xx, zz: zz < 0, lambda xx, zz: zz >= 0),
        exact_branch=exact_branch,
        exact_free=lambda t: (xi(X - t) * eta(Z)).astype(complex),
        energy_state=energy_state,
        energy_dispersion=lambda k: HBAR * k,
        interaction_support=(g.a, g.b),
        packet_support=lambda t: (xi.a + t, xi.b + t),
        notes=("Delta H_A is reported as the standard deviation hbar*(int |xi'|^2)^(1/2); "
               "hbar^2 int (xi')^2 is its square, the variance.",),
        params={"delta": delta_s, "Delta": Delta_s, "epsilon": eps, "scale": scale,
                "kick": kick, "grid_nx": grid_nx, "grid_nz": grid_nz, "xi": xi, "g": g},
    )


def xi_gradient_norm(xi: Bump) -> float:
    """hbar * (int |xi'|^2 dx)^(1/2) by adaptive quadrature of the analytic derivative."""
    from scipy import integrate

    def dxi(x):
        u = (2 * x - (xi.a + xi.b)) / (xi.b - xi.a)
        if abs(u) >= 1:
            return 0.0
        du = 2 / (xi.b - xi.a)
        return xi.height * np.exp(1 - 1 / (1 - u * u)) * (-2 * u / (1 - u * u) ** 2) * du

    val = integrate.quad(lambda x: dxi(x) ** 2, xi.a, xi.b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return HBAR * float(np.sqrt(val))
