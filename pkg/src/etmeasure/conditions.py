"""Numerical checks of the switching-device conditions and the finite no-go probe.

All three conditions quantify ``||[V, X (x) s]||`` for ``X`` running over an
orthonormal Hermitian basis of system operators (linearity reduces "for all
rho" to a basis) and ``s`` an apparatus or joint state:

* Condition 1 uses the freely evolved product ``X (x) sigma(t)`` for t <= t0.
* Conditions 2 and 3 use the fully evolved ``U(t) (X (x) sigma(t0)) U(t)^dag``.

Grid models never form operators on the grid.  The commutator is a sum of
rank-one terms over the span of {phi_s, W phi_s}, so its operator norm is
exactly the norm of a small matrix after a QR factorization of that span.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, UnsupportedModelError
from .grids import WaveFunction
from .models import FiniteModel, GridModel
from .qcore import (
    HBAR, hermitian_basis, propagator, random_density, random_hermitian, random_pure,
    random_unitary, tensor,
)

RESIDUAL_TOL = 1e-10
STRENGTH_TOL = 1e-8
SWITCH_OFF_TOL = 1e-8
VANDERMONDE_TOL = 1e-3
FREQ_MERGE_TOL = 1e-9


def _anti_hermitian_norm(c: np.ndarray) -> float:
    """Operator norm of an anti-Hermitian matrix via eigvalsh of i*c."""
    h = 1j * c
    w = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
    return float(np.max(np.abs(w))) if w.size else 0.0


def _window_times(window, samples: int) -> np.ndarray:
    if samples < 2:
        raise ArgumentError("need at least two samples")
    lo, hi = window
    if not hi > lo:
        raise ArgumentError("window must have positive length")
    return np.linspace(lo, hi, samples)


# finite models ---------------------------------------------------------------

def _finite_product_residual(m: FiniteModel, sigma: np.ndarray, basis) -> float:
    v = m.v
    out = 0.0
    for x in basis:
        s = tensor(x, sigma)
        out = max(out, _anti_hermitian_norm(v @ s - s @ v))
    return out


def _finite_evolved_residual(m: FiniteModel, t: float, basis, eig=None) -> float:
    w, u = eig if eig is not None else np.linalg.eigh(m.hamiltonian)
    ut = (u * np.exp(-1j * w * (t - m.t0) / HBAR)) @ u.conj().T
    v = m.v
    out = 0.0
    for x in basis:
        s = ut @ tensor(x, m.sigma0) @ ut.conj().T
        out = max(out, _anti_hermitian_norm(v @ s - s @ v))
    return out


# grid models -----------------------------------------------------------------

def _grid_commutator_norm(m: GridModel, x_coupling: np.ndarray, phis: Sequence[WaveFunction]) -> float:
    """||[B (x) W, sum_ss' X_ss' |s><s'| (x) |phi_s><phi_s'|]|| in the coupling basis."""
    b = np.asarray(m.coupling_values)
    wphis = [m.coupling(p) for p in phis]
    scale = np.sqrt(phis[0].cell)
    cols = [p.psi.reshape(-1) * scale for p in phis] + [w.psi.reshape(-1) * scale for w in wphis]
    a = np.stack(cols, axis=1)
    if not np.any(a[:, 2:]):
        return 0.0
    q, r = np.linalg.qr(a)
    rank = r.shape[0]
    blocks = np.zeros((2, 2, rank, rank), dtype=complex)
    for s in range(2):
        for sp in range(2):
            coef = x_coupling[s, sp]
            if coef == 0:
                continue
            # b_s |W phi_s><phi_s'| - b_s' |phi_s><W phi_s'|
            c = np.zeros((4, 4), dtype=complex)
            c[2 + s, sp] += b[s]
            c[s, 2 + sp] -= b[sp]
            blocks[s, sp] = coef * (r @ c @ r.conj().T)
    big = blocks.transpose(0, 2, 1, 3).reshape(2 * rank, 2 * rank)
    return _anti_hermitian_norm(big)


def _grid_basis(m: GridModel) -> list[np.ndarray]:
    s = m.system_basis
    return [s.conj().T @ x @ s for x in hermitian_basis(2)]


def support_certificate(m: GridModel) -> bool:
    """True when the freely moving packet is disjoint from supp W for every t <= t0.

    Needs declared supports of a packet that drifts monotonically to larger x;
    then disjointness at t0 covers the whole past.
    """
    if m.packet_support is None or m.interaction_support is None:
        return False
    lo, hi = m.packet_support(m.t0)
    a, b = m.interaction_support
    return hi <= a


# public API --------------------------------------------------------------------

def condition1_residual(m, window: tuple[float, float] | float | None = None, samples: int = 50) -> float:
    """max_{t, X} ||[V, X (x) sigma(t)]|| over sampled t in [t0 - T, t0].

    ``window`` is either the interval or its length T (default: tau, or 1).
    """
    window = _resolve_window(m, window)
    times = _window_times(window, samples)
    if np.any(times > m.t0 + 1e-12):
        raise ArgumentError("Condition 1 concerns times t <= t0")
    if m.kind == "finite":
        basis = hermitian_basis(m.d_s)
        return max(_finite_product_residual(m, m.sigma(t), basis) for t in times)
    if m.kind == "grid":
        if m.exact_free is None and m.dispersion is None:
            raise UnsupportedModelError("grid model lacks a free evolution rule")
        basis = _grid_basis(m)
        out = 0.0
        for t in times:
            phi = m.free_state(t)
            out = max(out, max(_grid_commutator_norm(m, x, [phi, phi]) for x in basis))
        return out
    raise UnsupportedModelError(f"unknown model kind {m.kind!r}")


@dataclass(frozen=True)
class Condition1Report:
    residual: float
    samples: int
    support_certified: bool

    @property
    def holds(self) -> bool:
        return self.residual <= RESIDUAL_TOL


def condition1_report(m, window=None, samples: int = 50) -> Condition1Report:
    """Sampled residual plus, for grid models, the all-past support certificate."""
    res = condition1_residual(m, window, samples)
    cert = m.kind == "grid" and support_certificate(m)
    return Condition1Report(res, samples, bool(cert))


def _resolve_window(m, window):
    if window is None:
        window = m.tau if getattr(m, "tau", None) else 1.0
    if np.isscalar(window):
        return (m.t0 - float(window), m.t0)
    return tuple(float(w) for w in window)


def _evolved_residuals(m, times: np.ndarray, method: str = "auto") -> np.ndarray:
    if m.kind == "finite":
        basis = hermitian_basis(m.d_s)
        eig = np.linalg.eigh(m.hamiltonian)
        return np.array([_finite_evolved_residual(m, t, basis, eig) for t in times])
    if m.kind == "grid":
        basis = _grid_basis(m)
        traj = m.branch_trajectory(times, method)
        return np.array([max(_grid_commutator_norm(m, x, br) for x in basis) for br in traj])
    raise UnsupportedModelError(f"unknown model kind {m.kind!r}")


def condition2_strength(m, horizon: float, samples: int = 50, method: str = "auto") -> float:
    """max commutator norm over t in (t0, t0 + horizon]; > 0 certifies Condition 2."""
    if horizon <= 0:
        raise ArgumentError("horizon must be positive")
    times = m.t0 + horizon * np.arange(1, samples + 1) / samples
    return float(np.max(_evolved_residuals(m, times, method)))


@dataclass(frozen=True)
class SwitchOff:
    holds: bool
    residual: float

    def __bool__(self):
        return self.holds


def condition3_check(m, t1: float, horizon: float, samples: int = 50, method: str = "auto") -> SwitchOff:
    """Strong form: commutator vanishes (<= 1e-8) for every sampled t in [t1, t1 + horizon]."""
    if t1 <= m.t0:
        raise ArgumentError("switch-off time must exceed t0")
    times = _window_times((t1, t1 + horizon), samples)
    res = float(np.max(_evolved_residuals(m, times, method)))
    return SwitchOff(res <= SWITCH_OFF_TOL, res)


# no-go probe -------------------------------------------------------------------

def bohr_frequencies(h: np.ndarray, tol: float = FREQ_MERGE_TOL) -> np.ndarray:
    e = np.linalg.eigvalsh(h) / HBAR
    diffs = np.sort((e[:, None] - e[None, :]).reshape(-1))
    keep = [diffs[0]]
    for d in diffs[1:]:
        if d - keep[-1] > tol * max(1.0, abs(d)):
            keep.append(d)
    return np.array(keep)


def vandermonde_margin(h_a: np.ndarray, times: np.ndarray) -> float:
    """Smallest singular value of exp(-i w_j t_k)/sqrt(n); 0 when samples < frequencies."""
    w = bohr_frequencies(h_a)
    if times.size < w.size:
        return 0.0
    vm = np.exp(-1j * np.outer(times, w)) / np.sqrt(times.size)
    return float(np.linalg.svd(vm, compute_uv=False).min())


@dataclass(frozen=True)
class ProbeRecord:
    trial: int
    residual: float
    strength: float
    certified: bool
    verdict: str
    family: str = ""
    commutant_dim: int = -1


def _verdict(residual: float, strength: float, certified: bool) -> str:
    if residual > RESIDUAL_TOL:
        return "condition1-violated"
    if strength <= STRENGTH_TOL:
        return "consistent"
    return "counterexample" if certified else "window-limited"


def probe_model(m: FiniteModel, fit_times: np.ndarray, check_times: np.ndarray, horizon: float,
                samples: int = 50, trial: int = 0, family: str = "", commutant_dim: int = -1) -> ProbeRecord:
    """Evaluate Condition 1 on past samples and Condition 2 on (t0, t0 + horizon]."""
    basis = hermitian_basis(m.d_s)
    past = np.concatenate([fit_times, check_times])
    residual = max(_finite_product_residual(m, m.sigma(t), basis) for t in past)
    strength = condition2_strength(m, horizon, samples)
    certified = vandermonde_margin(m.h_a, fit_times - m.t0) >= VANDERMONDE_TOL
    return ProbeRecord(trial, residual, strength, certified, _verdict(residual, strength, certified),
                       family, commutant_dim)


def commutant_projection(h_a: np.ndarray, sigma0: np.ndarray, d_s: int, times: np.ndarray,
                         v_seed: np.ndarray) -> tuple[np.ndarray, int]:
    """Project a Hermitian V onto {V : [V, X (x) sigma(t_k)] = 0 for all basis X, all t_k}.

    Works in a real coordinate system over the joint Hermitian basis, so the
    result stays Hermitian.  Returns the projection and the commutant dimension.
    """
    d_a = h_a.shape[0]
    joint = hermitian_basis(d_s * d_a)
    xs = hermitian_basis(d_s)
    rows = []
    for t in times:
        u = propagator(h_a, t)
        sig = u @ sigma0 @ u.conj().T
        for x in xs:
            s = tensor(x, sig)
            cols = [(bm @ s - s @ bm).reshape(-1) for bm in joint]
            a = np.stack(cols, axis=1)
            rows.append(a.real)
            rows.append(a.imag)
    a = np.concatenate(rows, axis=0)
    # rows >= columns, so the reduced factorization still spans the full right space
    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    tol = max(a.shape) * np.finfo(float).eps * (sv[0] if sv.size else 1.0) * 10
    rank = int(np.sum(sv > tol))
    null = vt[rank:].T
    coeffs = np.array([np.trace(bm @ v_seed).real for bm in joint])
    proj = null @ (null.T @ coeffs)
    v = sum(c * bm for c, bm in zip(proj, joint))
    v = 0.5 * (v + v.conj().T)
    return v, null.shape[1]


FAMILIES = ("generic", "block", "mixed")


def _random_apparatus(d_a: int, rng: np.random.Generator, family: str):
    if family == "generic":
        h = random_hermitian(d_a, rng)
        phi = random_pure(d_a, rng)
        return h, np.outer(phi, phi.conj())
    if family == "block":
        # block-diagonal H_A with sigma0 confined to the first block
        k = int(rng.integers(1, d_a)) if d_a > 1 else 1
        h = np.zeros((d_a, d_a), complex)
        h[:k, :k] = random_hermitian(k, rng)
        h[k:, k:] = random_hermitian(d_a - k, rng)
        phi = np.zeros(d_a, complex)
        phi[:k] = random_pure(k, rng)
        # hide the block structure in a random basis
        w = random_unitary(d_a, rng)
        phi = w @ phi
        return w @ h @ w.conj().T, np.outer(phi, phi.conj())
    if family == "mixed":
        return random_hermitian(d_a, rng), random_density(d_a, rng)
    raise ArgumentError(f"unknown apparatus family {family!r}")


def nogo_trial(d_s: int, d_a: int, seed: int, trial: int = 0, window: float = 2.0,
               fit_samples: int = 24, check_samples: int = 17, horizon: float = 2.0,
               strength_samples: int = 40) -> ProbeRecord:
    """One seeded trial: enforce Condition 1 on a past window, then measure Condition 2."""
    rng = np.random.default_rng(seed)
    family = FAMILIES[int(rng.integers(len(FAMILIES)))]
    h_a, sigma0 = _random_apparatus(d_a, rng, family)
    h_s = random_hermitian(d_s, rng)
    fit = np.linspace(-window, 0.0, fit_samples)
    # fresh times interleave the fit grid
    check = -window * (np.arange(check_samples) + 0.5) / check_samples
    v, dim = commutant_projection(h_a, sigma0, d_s, fit, random_hermitian(d_s * d_a, rng))
    nrm = np.linalg.norm(v, ord=2)
    if nrm > 1e-12:
        v = v / nrm
    m = FiniteModel(f"probe-{trial}", h_s, h_a, v, sigma0)
    return probe_model(m, fit, check, horizon, strength_samples, trial, family, dim)


@dataclass
class ProbeReport:
    d_s: int
    d_a: int
    seed: int
    records: list[ProbeRecord] = field(default_factory=list)

    @property
    def counterexamples(self) -> list[ProbeRecord]:
        return [r for r in self.records if r.verdict == "counterexample"]

    @property
    def consistent(self) -> bool:
        return not self.counterexamples

    def to_json(self) -> str:
        return json.dumps({"d_s": self.d_s, "d_a": self.d_a, "seed": self.seed,
                           "counterexamples": len(self.counterexamples),
                           "records": [asdict(r) for r in self.records]}, indent=2, sort_keys=True)


def _trial_args(d_s, d_a, seed, trials):
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    return [(d_s, d_a, int(s), i) for i, s in enumerate(seeds)]


def _run_trial(args):
    return nogo_trial(*args)


def nogo_probe(d_s: int, d_a: int, trials: int, seed: int, workers: int = 1) -> ProbeReport:
    """Seeded falsification run; trials are independent and may run in a process pool."""
    if d_s * d_a > 36:
        raise ArgumentError("probe limited to d_S * d_A <= 36")
    args = _trial_args(d_s, d_a, seed, trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            recs = list(ex.map(_run_trial, args))
    else:
        recs = [_run_trial(a) for a in args]
    return ProbeReport(d_s, d_a, seed, recs)


def grid_to_finite(m: GridModel) -> FiniteModel:
    """Dense finite model of a 1D grid model (H_A from the dispersion, V = B (x) W)."""
    if len(m.grids) != 1:
        raise UnsupportedModelError("only 1D grid models can be densified")
    g = m.grids[0]
    n = g.n
    if 2 * n > 512:
        raise ArgumentError("grid too large to densify")
    f = np.fft.fft(np.eye(n), axis=0, norm="ortho")
    h_a = f.conj().T @ np.diag(m.dispersion(g.k).astype(complex)) @ f
    cols = []
    for j in range(n):
        e = np.zeros(n, complex)
        e[j] = 1.0
        cols.append(m.coupling(WaveFunction((g,), e)).psi)
    w = np.stack(cols, axis=1)
    v = tensor(m.coupling_operator, 0.5 * (w + w.conj().T))
    phi = m.phi0.psi * np.sqrt(g.dx)
    phi = phi / np.linalg.norm(phi)
    return FiniteModel(m.name + f"-dense{n}", np.zeros((2, 2)), 0.5 * (h_a + h_a.conj().T), v,
                       np.outer(phi, phi.conj()), m.tau, m.pvm, None, m.t0,
                       params={"grid_n": n, "dx": g.dx})


def probe_grid_window(m: GridModel, window_cells: int = 16, samples: int = 16,
                      horizon: float | None = None) -> ProbeRecord:
    """Chiral-type probe on a small dense grid over a short past window.

    Past sample times are integer multiples of dx, where the spectral
    translation is an exact cyclic shift.
    """
    fm = grid_to_finite(m)
    dx = fm.params["dx"]
    steps = np.unique(np.round(np.linspace(0, window_cells, samples)).astype(int))
    fit = -dx * steps[::-1].astype(float)
    horizon = m.tau if horizon is None else horizon
    return probe_model(fm, fit, np.array([]), horizon, 40, family="grid-window")
