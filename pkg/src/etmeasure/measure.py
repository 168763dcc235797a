"""Measurement protocol: outcome statistics, worst-case error, disturbance, p(t).

Everything is phrased through system effect operators
``M_n = tr_A[(I (x) sigma0) U^dag (I (x) E_n) U]`` so that
``P(n|rho) = tr[rho M_n]`` for every input at once.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ProtocolError, ValidationError
from .metrics import fidelity, trace_distance_paper
from .models import FiniteModel, GridModel, fourier_family
from .qcore import HBAR, as_density, propagator, purify, tensor

ROW_SUM_TOL = 1e-8


def _tau(m, tau):
    tau = m.tau if tau is None else tau
    if tau is None or tau <= 0:
        raise ArgumentError("a positive measurement duration tau is required")
    return float(tau)


def outcome_probabilities(m, rho_in, tau: float | None = None, method: str = "auto") -> np.ndarray:
    """Born probabilities of the meter after evolving rho_in (x) sigma(t0) for tau."""
    tau = _tau(m, tau)
    rho = as_density(rho_in)
    effects = m.effect_operators(m.t0 + tau, method=method)
    p = np.array([np.trace(rho @ e).real for e in effects])
    if abs(p.sum() - 1) > ROW_SUM_TOL:
        raise ValidationError(f"outcome probabilities sum to {p.sum()!r}")
    return np.clip(p, 0.0, 1.0)


def range_vectors(p: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning the range of a projection."""
    w, u = np.linalg.eigh(p)
    return u[:, w > 0.5]


@dataclass(frozen=True)
class WorstCaseError:
    """sup_n sup_{rho in range P_n} (1 - P(n|rho)).

    Computed as 1 - lambda_min of the effect compressed to range(P_n), which
    is exact for sectors of any rank.
    """

    value: float
    per_outcome: tuple[float, ...]
    exact: bool = True
    samples: int = 0

    def __float__(self):
        return self.value


def worst_case_error(m, tau: float | None = None, method: str = "auto") -> WorstCaseError:
    tau = _tau(m, tau)
    if m.pvm is None:
        raise ProtocolError(f"model {m.name!r} declares no measured observable")
    effects = m.effect_operators(m.t0 + tau, method=method)
    if len(effects) < len(m.pvm):
        raise ProtocolError("meter has fewer outcomes than the measured observable")
    per = []
    for p, e in zip(m.pvm, effects):
        q = range_vectors(p)
        lam = np.linalg.eigvalsh(q.conj().T @ e @ q).min()
        per.append(float(min(max(1.0 - lam, 0.0), 1.0)))
    return WorstCaseError(max(per), tuple(per))


def sampled_worst_case_error(m, tau: float | None, samples: int, rng: np.random.Generator,
                             method: str = "auto") -> float:
    """Lower bound from random pure states in each range; cross-checks the exact value."""
    tau = _tau(m, tau)
    effects = m.effect_operators(m.t0 + tau, method=method)
    best = 0.0
    for p, e in zip(m.pvm, effects):
        q = range_vectors(p)
        for _ in range(samples):
            c = rng.normal(size=q.shape[1]) + 1j * rng.normal(size=q.shape[1])
            v = q @ (c / np.linalg.norm(c))
            best = max(best, 1.0 - np.vdot(v, e @ v).real)
    return best


def eigenvector(m, outcome: int) -> np.ndarray:
    """Designated eigenvector of the measured observable for ``outcome``."""
    if m.pvm is None:
        raise ProtocolError(f"model {m.name!r} declares no measured observable")
    return range_vectors(m.pvm[outcome])[:, 0]


@dataclass(frozen=True)
class Disturbance:
    f_plus: float
    f_minus: float
    f_pair: float
    d_pair: float
    rho_plus: np.ndarray = field(repr=False)
    rho_minus: np.ndarray = field(repr=False)

    @property
    def min_conjugate(self) -> float:
        return min(self.f_plus, self.f_minus)


def disturbance_profile(m, tau: float | None = None, pair: tuple[int, int] = (0, 1),
                        method: str = "auto") -> Disturbance:
    """Fidelities of the restricted |+-> runs with the freely evolved |+-'> and each other."""
    tau = _tau(m, tau)
    a, b = eigenvector(m, pair[0]), eigenvector(m, pair[1])
    plus, minus = (a + b) / np.sqrt(2), (a - b) / np.sqrt(2)
    t = m.t0 + tau
    rp = m.restricted_state(plus, t, method=method)
    rm = m.restricted_state(minus, t, method=method)
    pp = m.free_system_state(plus, t)
    pm = m.free_system_state(minus, t)
    return Disturbance(fidelity(rp, pp), fidelity(rm, pm), fidelity(rp, rm),
                       trace_distance_paper(rp, rm), rp, rm)


@dataclass(frozen=True)
class ConjugateFamily:
    restricted: tuple[np.ndarray, ...]
    fidelities: tuple[float, ...]
    spread: float

    @property
    def min_fidelity(self) -> float:
        return min(self.fidelities)


def conjugate_family(m, tau: float | None = None, n: int | None = None,
                     method: str = "auto") -> ConjugateFamily:
    """Restricted states of the Fourier family over the first n outcome eigenvectors.

    ``spread`` is the largest trace distance between two restricted states;
    it vanishes when the family collapses to a common system state.
    """
    tau = _tau(m, tau)
    n = len(m.pvm) if n is None else n
    if n < 2:
        raise ArgumentError("need at least two outcomes")
    basis = np.stack([eigenvector(m, k) for k in range(n)], axis=1)
    t = m.t0 + tau
    rest, fids = [], []
    for c in fourier_family(n):
        v = basis @ c
        r = m.restricted_state(v, t, method=method)
        rest.append(r)
        fids.append(fidelity(r, m.free_system_state(v, t)))
    spread = max(trace_distance_paper(x, y) for x in rest for y in rest)
    return ConjugateFamily(tuple(rest), tuple(fids), spread)


@dataclass(frozen=True)
class PCurve:
    """p(t) = |<Phi_0(t)|Phi(t)>|^2 on sample times measured from t0."""

    times: np.ndarray
    p: np.ndarray

    def rows(self):
        return [(f"{t:.12g}", f"{v:.15g}") for t, v in zip(self.times, self.p)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "p"])
            w.writerows(self.rows())


class _FiniteOverlap:
    """Closed-form <Phi_0(t)|Phi(t)> for a finite model (sigma0 purified if mixed)."""

    def __init__(self, m: FiniteModel, psi: np.ndarray):
        fm = m if np.linalg.matrix_rank(m.sigma0, tol=1e-10) == 1 else m.purified()
        w, u = np.linalg.eigh(fm.sigma0)
        start = np.kron(psi, u[:, -1])
        self.e, self.vec = np.linalg.eigh(fm.hamiltonian)
        self.e0, self.vec0 = np.linalg.eigh(fm.free_hamiltonian)
        self.c = self.vec.conj().T @ start
        self.c0 = self.vec0.conj().T @ start
        self.v = fm.v

    def states(self, t: float):
        full = self.vec @ (np.exp(-1j * self.e * t / HBAR) * self.c)
        free = self.vec0 @ (np.exp(-1j * self.e0 * t / HBAR) * self.c0)
        return free, full

    def p(self, t: float) -> float:
        free, full = self.states(t)
        return float(abs(np.vdot(free, full)) ** 2)

    def dp(self, t: float) -> float:
        """d/dt |<Phi_0|Phi>|^2 with d<Phi_0|Phi>/dt = -i <Phi_0|V|Phi> / hbar."""
        free, full = self.states(t)
        a = np.vdot(free, full)
        da = -1j * np.vdot(free, self.v @ full) / HBAR
        return float(2 * (np.conj(a) * da).real)


def _check_pure_input(psi_in) -> np.ndarray:
    psi = np.asarray(psi_in, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ArgumentError("p(t) needs a normalized pure input")
    return psi


def p_curve(m, psi_in, tau_max: float, samples: int = 50, method: str = "auto") -> PCurve:
    psi = _check_pure_input(psi_in)
    if samples < 2 or tau_max <= 0:
        raise ArgumentError("need samples >= 2 and tau_max > 0")
    times = np.linspace(0.0, tau_max, samples)
    if m.kind == "finite":
        ov = _FiniteOverlap(m, psi)
        return PCurve(times, np.clip([ov.p(t) for t in times], 0.0, 1.0))
    if m.kind == "grid":
        # H_S = 0 on grid models; the free branch of every component is sigma(t)
        amp = np.abs(m.system_basis.conj().T @ psi) ** 2
        traj = m.branch_trajectory(m.t0 + times, method)
        p = []
        for t, br in zip(times, traj):
            free = m.free_state(m.t0 + t)
            p.append(abs(sum(a * free.inner(b) for a, b in zip(amp, br))) ** 2)
        return PCurve(times, np.clip(np.array(p), 0.0, 1.0))
    raise ProtocolError(f"unknown model kind {m.kind!r}")


@dataclass(frozen=True)
class RobertsonCheck:
    """Slack of |dp/dt| <= 2 ||V|| sqrt(p - p^2) / hbar at sample times (>= 0 holds)."""

    times: np.ndarray
    p: np.ndarray
    dp_fd: np.ndarray
    dp_exact: np.ndarray
    bound: np.ndarray

    @property
    def slack(self) -> float:
        return float(np.min(self.bound - np.abs(self.dp_fd)))

    @property
    def derivative_mismatch(self) -> float:
        return float(np.max(np.abs(self.dp_fd - self.dp_exact)))


def robertson_check(m: FiniteModel, psi_in, tau_max: float, samples: int = 50,
                    h: float = 1e-5) -> RobertsonCheck:
    """Central differences (p(t+h) - p(t-h)) / 2h against the Robertson rate bound."""
    if m.kind != "finite":
        raise ProtocolError("the rate check needs a finite model")
    ov = _FiniteOverlap(m, _check_pure_input(psi_in))
    times = np.linspace(0.0, tau_max, samples)
    p = np.array([ov.p(t) for t in times])
    fd = np.array([(ov.p(t + h) - ov.p(t - h)) / (2 * h) for t in times])
    ex = np.array([ov.dp(t) for t in times])
    bound = 2 * m.v_norm / HBAR * np.sqrt(np.clip(p - p * p, 0.0, None))
    return RobertsonCheck(times, p, fd, ex, bound)


def first_perfect_time(m, target: float = 1e-6, t_max: float = 10.0, coarse: int = 400,
                       xtol: float = 1e-12) -> float:
    """Smallest tau with worst-case error <= target.

    The error can dip below target in windows narrower than the scan step, so
    each local minimum of the coarse scan is refined before bisecting.
    """
    from scipy.optimize import minimize_scalar

    def err(t):
        return worst_case_error(m, t).value

    grid = np.linspace(t_max / coarse, t_max, coarse)
    errs = np.array([err(t) for t in grid])
    for i in range(coarse):
        if errs[i] <= target:
            lo, hi = (grid[i - 1] if i else 0.0), grid[i]
            break
        left = errs[i - 1] if i else np.inf
        right = errs[i + 1] if i + 1 < coarse else np.inf
        if errs[i] <= left and errs[i] <= right:
            a = grid[i - 1] if i else 0.0
            b = grid[i + 1] if i + 1 < coarse else t_max
            res = minimize_scalar(err, bounds=(a, b), method="bounded",
                                  options={"xatol": xtol})
            if res.fun <= target:
                lo, hi = a, float(res.x)
                break
    else:
        raise ProtocolError(f"no tau <= {t_max} reaches P_error <= {target}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if err(mid) <= target:
            hi = mid
        else:
            lo = mid
    return float(hi)


@dataclass
class MeasurementRun:
    model: str
    tau: float
    inputs: list[str]
    probabilities: np.ndarray
    p_error: WorstCaseError
    disturbance: Disturbance | None
    p_curve: PCurve | None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        p = np.asarray(self.probabilities)
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValidationError("probabilities outside [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1) > ROW_SUM_TOL):
            raise ValidationError("probability rows do not sum to 1")

    def to_dict(self) -> dict:
        d = self.disturbance
        return {
            "model": self.model,
            "tau": self.tau,
            "inputs": self.inputs,
            "probabilities": [[float(x) for x in row] for row in self.probabilities],
            "p_error": {"value": self.p_error.value, "per_outcome": list(self.p_error.per_outcome),
                        "exact": self.p_error.exact, "samples": self.p_error.samples},
            "disturbance": None if d is None else {
                "f_plus": d.f_plus, "f_minus": d.f_minus, "f_pair": d.f_pair, "d_pair": d.d_pair,
                "min_conjugate": d.min_conjugate},
            "notes": list(self.notes),
        }


def standard_inputs(m) -> tuple[list[str], list[np.ndarray]]:
    """Outcome eigenvectors, the |+-> pair on outcomes 0 and 1, and the maximally mixed state."""
    labels, states = [], []
    for n in range(len(m.pvm)):
        labels.append(f"|{n}>")
        states.append(eigenvector(m, n))
    a, b = eigenvector(m, 0), eigenvector(m, 1)
    labels += ["|+>", "|->", "I/d"]
    states += [(a + b) / np.sqrt(2), (a - b) / np.sqrt(2), np.eye(m.d_s) / m.d_s]
    return labels, states


def run_measurement(m, tau: float | None = None, p_samples: int = 50, method: str = "auto",
                    pair: tuple[int, int] = (0, 1)) -> MeasurementRun:
    tau = _tau(m, tau)
    labels, states = standard_inputs(m)
    probs = np.array([outcome_probabilities(m, s, tau, method) for s in states])
    err = worst_case_error(m, tau, method)
    dist = disturbance_profile(m, tau, pair, method)
    plus = (eigenvector(m, pair[0]) + eigenvector(m, pair[1])) / np.sqrt(2)
    curve = p_curve(m, plus, tau, p_samples, method) if p_samples else None
    return MeasurementRun(m.name, tau, labels, probs, err, dist, curve, list(m.notes))
