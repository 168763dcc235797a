"""Time-energy inequalities evaluated on measured quantities.

Every entry reports ``margin = lhs - rhs`` oriented so that ``margin >= 0``
means the inequality holds.  Cosine forms are clamped to 0 once their
argument passes pi/2, where the bound they come from is vacuous.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import constants as sc

from .errors import ArgumentError
from .qcore import HBAR

VERDICT_TOL = 1e-12
WIDTH_ALPHA_MIN = 0.5 * (1 + 1 / math.sqrt(2))
WIDTH_THRESHOLD_NOTE = ("at alpha=(1+1/sqrt2)/2 the width bound is 2*hbar*arccos(1) = 0, "
                        "so the value 2*pi*hbar/3 for that alpha is not reproduced")


@dataclass(frozen=True)
class AuditEntry:
    name: str
    lhs: float
    rhs: float
    margin: float
    verdict: str
    vacuous: bool = False
    notes: tuple[str, ...] = ()

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def _entry(name, lhs, rhs, margin, vacuous=False, notes=()) -> AuditEntry:
    verdict = "holds" if margin >= -VERDICT_TOL else "fails"
    return AuditEntry(name, float(lhs), float(rhs), float(margin), verdict, bool(vacuous), tuple(notes))


def clamped_cos(x: float) -> float:
    """cos x on [0, pi/2], 0 beyond."""
    x = abs(x)
    return 0.0 if x > math.pi / 2 else math.cos(x)


def _nonneg(**kw):
    for k, v in kw.items():
        if v < 0 or not np.isfinite(v):
            raise ArgumentError(f"{k} must be finite and nonnegative, got {v!r}")


def audit_main(tau: float, delta_h: float) -> AuditEntry:
    """tau * Delta H_A >= pi hbar / 4."""
    _nonneg(tau=tau, delta_h=delta_h)
    lhs = tau * delta_h
    rhs = math.pi * HBAR / 4
    return _entry("main", lhs, rhs, lhs - rhs)


def audit_n_outcomes(tau: float, delta_h: float, n: float) -> AuditEntry:
    """cos(tau Delta H / hbar) <= 1/sqrt(N); N = inf gives tau Delta H >= pi hbar / 2."""
    _nonneg(tau=tau, delta_h=delta_h)
    if not n >= 2:
        raise ArgumentError("need N >= 2 outcomes")
    x = tau * delta_h / HBAR
    if math.isinf(n):
        return _entry("n_outcomes(inf)", tau * delta_h, math.pi * HBAR / 2, tau * delta_h - math.pi * HBAR / 2)
    c = clamped_cos(x)
    rhs = 1 / math.sqrt(n)
    # oriented as rhs - lhs: the cosine must not exceed 1/sqrt(N)
    return _entry(f"n_outcomes({int(n)})", c, rhs, rhs - c)


def audit_width(tau: float, width: float, alpha: float) -> AuditEntry:
    """tau * Delta_alpha >= 2 hbar arccos((1/sqrt2 + 1 - alpha) / alpha)."""
    _nonneg(tau=tau, width=width)
    name = f"width(alpha={alpha:.6g})"
    if not (WIDTH_ALPHA_MIN - 1e-15 <= alpha <= 1):
        return AuditEntry(name, tau * width, float("nan"), float("nan"), "inapplicable",
                          notes=(f"alpha below validity threshold {WIDTH_ALPHA_MIN:.12g}", WIDTH_THRESHOLD_NOTE))
    arg = min((1 / math.sqrt(2) + 1 - alpha) / alpha, 1.0)
    rhs = 2 * HBAR * math.acos(arg)
    lhs = tau * width
    return _entry(name, lhs, rhs, lhs - rhs, vacuous=rhs <= 0, notes=(WIDTH_THRESHOLD_NOTE,))


def error_tolerant_rhs(p_error: float) -> float:
    return math.sqrt((1 + 6 * math.sqrt(p_error)) / 2)


def audit_error_tolerant(tau: float, delta_h: float, p_error: float) -> AuditEntry:
    """cos(tau Delta H / hbar) <= sqrt((1 + 6 sqrt(P_error)) / 2)."""
    _nonneg(tau=tau, delta_h=delta_h)
    if not 0 <= p_error <= 1:
        raise ArgumentError("P_error must lie in [0, 1]")
    c = clamped_cos(tau * delta_h / HBAR)
    rhs = error_tolerant_rhs(p_error)
    return _entry("error_tolerant", c, rhs, rhs - c, vacuous=rhs >= 1)


def audit_interaction(tau: float, v_norm: float, n: float = 2) -> tuple[AuditEntry, AuditEntry]:
    """||V|| tau >= pi hbar / 4, plus the N-outcome form cos(||V|| tau / hbar) <= 1/sqrt(N)."""
    _nonneg(tau=tau, v_norm=v_norm)
    lhs = v_norm * tau
    two = _entry("interaction", lhs, math.pi * HBAR / 4, lhs - math.pi * HBAR / 4)
    nform = audit_n_outcomes(tau, v_norm, n)
    nform = replace(nform, name="interaction_" + nform.name)
    return two, nform


def lattice_rhs(eps: float) -> float:
    return math.pi * HBAR / 4 - math.pi * HBAR / 2 * math.sqrt(2 * eps)


def audit_lattice(tau: float, delta_h_box: float, eps: float) -> AuditEntry:
    """Delta H_box * tau >= pi hbar / 4 - (pi hbar / 2) sqrt(2 eps)."""
    _nonneg(tau=tau, delta_h_box=delta_h_box)
    if not 0 <= eps <= 1:
        raise ArgumentError("eps must lie in [0, 1]")
    lhs = delta_h_box * tau
    rhs = lattice_rhs(eps)
    return _entry("lattice", lhs, rhs, lhs - rhs, vacuous=rhs <= 0)


@dataclass(frozen=True)
class SpacetimeReport:
    R: float
    tau: float
    mass_min: float
    schwarzschild_radius: float
    region_size: float
    combined_lhs: float
    combined_rhs: float
    small_tau_lhs: float
    small_tau_rhs: float
    binding: str

    @property
    def combined_margin(self) -> float:
        return self.combined_lhs - self.combined_rhs

    @property
    def small_tau_margin(self) -> float:
        return self.small_tau_lhs - self.small_tau_rhs


def spacetime_heuristic(R: float, tau: float, G: float = sc.G, c: float = sc.c,
                        hbar: float = sc.hbar) -> SpacetimeReport:
    """Energy-time bound M c^2 tau >= pi hbar / 4 against the Schwarzschild condition.

    Defaults are SI (CODATA via scipy.constants); pass G = c = hbar = 1 for
    the dimensionless form.
    """
    for k, v in (("R", R), ("tau", tau), ("G", G), ("c", c), ("hbar", hbar)):
        if not v > 0:
            raise ArgumentError(f"{k} must be positive")
    m_min = math.pi * hbar / (4 * c ** 2 * tau)
    r_s = 2 * G * m_min / c ** 2
    size = R + c * tau
    combined_lhs = tau * size * c ** 4 / (2 * G)
    combined_rhs = math.pi * hbar / 4
    small_lhs = tau * R
    small_rhs = math.pi * hbar * G / (2 * c ** 4)
    if size < r_s:
        binding = "horizon"  # the minimal mass would not fit outside its own radius
    elif c * tau > R:
        binding = "light-crossing"
    else:
        binding = "size"
    return SpacetimeReport(R, tau, m_min, r_s, size, combined_lhs, combined_rhs, small_lhs,
                           small_rhs, binding)


@dataclass
class AuditReport:
    model: str
    tau: float
    delta_h_a: float
    widths: dict[float, float]
    v_norm: float | None
    n_outcomes: int | None
    p_error: float | None
    entries: list[AuditEntry] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(e.verdict != "fails" for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "model": self.model, "tau": self.tau, "delta_h_a": self.delta_h_a,
            "widths": {f"{a:.12g}": w for a, w in sorted(self.widths.items())},
            "v_norm": self.v_norm, "n_outcomes": self.n_outcomes, "p_error": self.p_error,
            "entries": [asdict(e) for e in self.entries],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def margin_rows(self) -> list[tuple]:
        return [(e.name, e.lhs, e.rhs, e.margin, e.verdict, e.vacuous) for e in self.entries]


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)!r}")


DEFAULT_ALPHAS = (WIDTH_ALPHA_MIN, 0.95, 1.0)


PERFECT_TOL = 1e-6


def _inapplicable(name: str, why: str) -> AuditEntry:
    return AuditEntry(name, float("nan"), float("nan"), float("nan"), "inapplicable", notes=(why,))


def audit_model(m, tau: float | None = None, alphas=DEFAULT_ALPHAS, method: str = "auto",
                condition1_window: float | None = None) -> AuditReport:
    """Measure a model at tau and evaluate every applicable inequality.

    The H_A-based inequalities presuppose Condition 1 (the apparatus switches
    the interaction on); models failing it get "inapplicable" entries.  The
    ||V|| inequality needs no such hypothesis.
    """
    from .conditions import RESIDUAL_TOL, condition1_report
    from .measure import worst_case_error
    from .metrics import overall_width

    tau = m.tau if tau is None else tau
    dh = m.apparatus_energy_fluctuation()
    try:
        spectrum = m.apparatus_spectrum()
        widths = {float(a): overall_width(spectrum, a) for a in alphas}
    except ArgumentError:
        widths = {}
    perr = worst_case_error(m, tau, method).value if (m.pvm is not None and m.meter is not None) else None
    n = len(m.pvm) if m.pvm is not None else None
    v_norm = m.v_norm if m.kind == "finite" else None
    rep = AuditReport(m.name, float(tau), dh, widths, v_norm, n, perr, notes=list(m.notes))
    c1 = condition1_report(m, condition1_window)
    switching = c1.residual <= RESIDUAL_TOL
    perfect = perr is not None and perr <= PERFECT_TOL
    why = f"Condition 1 residual {c1.residual:.3g} exceeds {RESIDUAL_TOL:g}"
    if perfect:
        if switching:
            rep.entries.append(audit_main(tau, dh))
            if n and n > 2:
                rep.entries.append(audit_n_outcomes(tau, dh, n))
            for a, w in widths.items():
                rep.entries.append(audit_width(tau, w, a))
        else:
            rep.entries.append(_inapplicable("main", why))
        if v_norm is not None:
            rep.entries.extend(audit_interaction(tau, v_norm, n or 2))
    elif perr is not None:
        rep.notes.append(f"worst-case error {perr:.3g} above {PERFECT_TOL:g}: "
                         "only the error-tolerant form applies")
    if perr is not None:
        rep.entries.append(audit_error_tolerant(tau, dh, perr) if switching
                           else _inapplicable("error_tolerant", why))
    if c1.support_certified:
        rep.notes.append("Condition 1 certified for all past times by support arithmetic")
    if widths:
        rep.notes.append(WIDTH_THRESHOLD_NOTE)
    return rep
