"""Acceptance criteria 1-10 at their stated tolerances.

Each test records its outcome through the ``criterion`` fixture; the
terminal summary prints one pass/fail line per criterion with runtimes.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from etmeasure import grids as gr
from etmeasure.bounds import (
    WIDTH_THRESHOLD_NOTE, WIDTH_ALPHA_MIN, audit_error_tolerant, audit_lattice, audit_main, audit_model,
    audit_n_outcomes, audit_width,
)
from etmeasure.cli import main
from etmeasure.conditions import condition1_residual, condition3_check, nogo_probe
from etmeasure.lattice import (
    box_hamiltonian, embed_sites, full_hamiltonian, locality_error, locality_profile, random_chain,
)
from etmeasure.measure import disturbance_profile, outcome_probabilities, robertson_check
from etmeasure.metrics import bures_angle, energy_fluctuation, fidelity, mt_overlap_bound
from etmeasure.models import (
    KET, GaussianPacketParams, chiral_model, gaussian_model, random_finite_model, stern_gerlach_2d,
)
from etmeasure.qcore import (
    SX, SZ, partial_trace, propagator, random_density, random_hermitian, random_pure, random_unitary,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _within(start, limit):
    elapsed = time.perf_counter() - start
    assert elapsed < limit, f"runtime {elapsed:.1f} s exceeds {limit} s"


# 1 -------------------------------------------------------------------------

def test_c1_saturation(criterion):
    with criterion(1, "qubit sigma_z, |+>: overlap = cos t") as rec:
        plus = np.array([1, 1]) / math.sqrt(2)
        ts = np.linspace(0, math.pi / 2, 201)
        ov = np.array([abs(np.vdot(plus, propagator(SZ, t) @ plus)) for t in ts])
        dev = float(np.max(np.abs(ov - np.cos(ts))))
        rec.detail = f"max deviation {dev:.2e}"
        assert dev <= 1e-9


def test_c1_random_pairs(criterion):
    with criterion(1, "500 random (H, psi), d <= 8") as rec:
        start = time.perf_counter()
        rng = np.random.default_rng(1)
        worst = np.inf
        for _ in range(500):
            d = int(rng.integers(2, 9))
            h, psi = random_hermitian(d, rng), random_pure(d, rng)
            dh = energy_fluctuation(h, psi)
            w, u = np.linalg.eigh(h)
            c = u.conj().T @ psi
            for t in np.linspace(0, 2.0 / max(dh, 1e-12), 20):
                ov = abs(np.sum(np.abs(c) ** 2 * np.exp(-1j * w * t)))
                worst = min(worst, ov - mt_overlap_bound(dh, t))
        rec.detail = f"min slack {worst:.2e}"
        assert worst >= -1e-9
        _within(start, 5)


# 2 -------------------------------------------------------------------------

def test_c2_fidelity_suite(criterion):
    with criterion(2, "1000 random pairs/triples") as rec:
        start = time.perf_counter()
        rng = np.random.default_rng(2)
        inv, mono, tri = 0.0, np.inf, np.inf
        for _ in range(1000):
            d = int(rng.integers(2, 9))
            a = random_density(d, rng, rank=int(rng.integers(1, d + 1)))
            b = random_density(d, rng, rank=int(rng.integers(1, d + 1)))
            c = random_density(d, rng)
            u = random_unitary(d, rng)
            f = fidelity(a, b)
            inv = max(inv, abs(fidelity(u @ a @ u.conj().T, u @ b @ u.conj().T) - f))
            tri = min(tri, bures_angle(a, c) + bures_angle(c, b) - bures_angle(a, b))
            # bipartite 2 x (2..4) for restriction
            da = int(rng.integers(2, 5))
            x, y = random_density(2 * da, rng), random_density(2 * da, rng)
            fx = fidelity(partial_trace(x, [0], (2, da)).density(), partial_trace(y, [0], (2, da)).density())
            mono = min(mono, fx - fidelity(x, y))
        closed = abs(fidelity(np.eye(2) / 2, np.diag([1.0, 0.0])) - 1 / math.sqrt(2))
        rec.detail = (f"invariance {inv:.1e}, monotonicity slack {mono:.1e}, "
                      f"triangle slack {tri:.1e}, F(I/2,|0>) err {closed:.1e}")
        assert inv <= 1e-9 and mono >= -1e-9 and tri >= -1e-9 and closed <= 1e-10
        _within(start, 10)


# 3 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def chiral():
    return chiral_model()


def test_c3_chiral(criterion, chiral):
    with criterion(3, "chiral device") as rec:
        start = time.perf_counter()
        res = condition1_residual(chiral, chiral.tau, 50)
        t1 = chiral.params["Delta"] + chiral.params["delta"]
        c3 = condition3_check(chiral, t1, chiral.tau, 20)
        split_err = 0.0
        for s, e in zip(chiral.branch_states(chiral.tau, "split"), chiral.branch_states(chiral.tau, "exact")):
            split_err = max(split_err, s.with_psi(s.psi - e.psi).norm())
        rec.detail = f"C1 residual {res:.1e}, C3 residual {c3.residual:.1e}, split vs exact {split_err:.1e}"
        assert res <= 1e-10 and c3.holds and split_err <= 1e-6
        _within(start, 20)


# 4 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def gauss():
    return gaussian_model(GaussianPacketParams())


def _moments(m):
    p = m.params["packet"]
    ss = np.linspace(0, p.T, 11)
    return p, ss, [gr.position_moments(m.free_state(s - p.T)) for s in ss]


def test_c4_mean_and_leakage(criterion, gauss):
    with criterion(4, "mean, leakage <= Chebyshev, k sweep") as rec:
        start = time.perf_counter()
        p, ss, mom = _moments(gauss)
        mean_rel = max(abs(mu - p.mean_position(s)) / abs(p.mean_position(s)) for s, (mu, _) in zip(ss, mom))
        over = max(gr.interval_probability(gauss.free_state(s - p.T), 0.0) - p.chebyshev_bound(s) for s in ss)
        leaks = []
        for k in (2, 4, 8, 16):
            q = GaussianPacketParams(k=k)
            leaks.append(gr.interval_probability(gaussian_model(q).free_state(0.0), 0.0))
        rec.detail = f"mean rel {mean_rel:.1e}, leakage - bound <= {over:.2e}, leakage {['%.2g' % x for x in leaks]}"
        assert mean_rel <= 1e-6 and over <= 0
        assert all(b < a for a, b in zip(leaks, leaks[1:]))
        _within(start, 30)


@pytest.mark.xfail(strict=True, reason="sigma (1+...)^(1/2) is sqrt(2) times the standard "
                                       "deviation of the density it is derived from")
def test_c4_spread_closed_form(criterion, gauss):
    with criterion(4, "spread vs stated closed form sigma(1+...)^(1/2)") as rec:
        p, ss, mom = _moments(gauss)
        ratio = [p.spread_formula(s) / sd for s, (_, sd) in zip(ss, mom)]
        rec.detail = f"stated/grid ratio {np.mean(ratio):.6f} (sqrt 2 = {math.sqrt(2):.6f})"
        assert max(abs(r - 1) for r in ratio) <= 1e-6


def test_c4_spread_corrected(criterion, gauss):
    with criterion(4, "spread vs corrected closed form (informative)") as rec:
        p, ss, mom = _moments(gauss)
        rel = max(abs(sd - p.spread(s)) / p.spread(s) for s, (_, sd) in zip(ss, mom))
        rec.detail = f"max rel {rel:.1e}"
        assert rel <= 1e-6


# 5 -------------------------------------------------------------------------

def test_c5_stern_gerlach(criterion):
    with criterion(5, "2D Stern-Gerlach") as rec:
        start = time.perf_counter()
        m = stern_gerlach_2d()
        p0 = outcome_probabilities(m, KET[0])[0]
        p1 = outcome_probabilities(m, KET[1])[1]
        d = disturbance_profile(m)
        rep = audit_model(m)
        main_entry = next(e for e in rep.entries if e.name == "main")
        products = []
        for c in (0.5, 1, 2, 4, 8):
            mc = stern_gerlach_2d(scale=c)
            products.append(mc.tau * mc.apparatus_energy_fluctuation())
        spread = (max(products) - min(products)) / np.mean(products)
        rec.detail = (f"P correct {min(p0, p1):.9f}, F(rho+,rho-) {d.f_pair:.9f}, min conj F {d.min_conjugate:.6f}, "
                      f"main margin {main_entry.margin:.4f}, product spread {spread:.1e}")
        assert min(p0, p1) >= 1 - 1e-6
        assert d.f_pair >= 1 - 1e-5
        assert d.min_conjugate <= 1 / math.sqrt(2) + 1e-6
        assert main_entry.verdict == "holds" and main_entry.margin >= 0
        assert m.tau * m.apparatus_energy_fluctuation() >= math.pi / 4
        assert spread <= 1e-6
        _within(start, 180)


# 6 -------------------------------------------------------------------------

def test_c6_robertson(criterion):
    with criterion(6, "200 random finite models") as rec:
        start = time.perf_counter()
        rng = np.random.default_rng(6)
        dims = [(a, b) for a in range(2, 7) for b in range(2, 7) if a * b <= 36]
        p_slack = rate_slack = np.inf
        for i in range(200):
            ds, da = dims[i % len(dims)]
            m = random_finite_model(ds, da, seed=1000 + i)
            assert abs(m.v_norm - 1) < 1e-9
            rc = robertson_check(m, random_pure(ds, rng), math.pi / 2, 50)
            p_slack = min(p_slack, float(np.min(rc.p - np.cos(rc.times) ** 2)))
            rate_slack = min(rate_slack, rc.slack)
        rec.detail = f"p - cos^2 >= {p_slack:.2e}, rate slack {rate_slack:.2e}"
        assert p_slack >= -1e-9 and rate_slack >= -1e-6
        _within(start, 60)


# 7 -------------------------------------------------------------------------

def test_c7_audit_arithmetic(criterion):
    with criterion(7, "audit identities") as rec:
        start = time.perf_counter()
        taus = np.linspace(0, 3, 100)
        dhs = np.linspace(0, 3, 100)
        mism_n = mism_e = 0
        for t in taus:
            for h in dhs:
                ref = audit_main(t, h).verdict
                mism_n += audit_n_outcomes(t, h, 2).verdict != ref
                mism_e += audit_error_tolerant(t, h, 0.0).verdict != ref
        full = audit_width(1.0, 0.0, 1.0).rhs
        low = audit_width(1.0, 0.0, WIDTH_ALPHA_MIN)
        rep = audit_model(random_finite_model(2, 3, 0), tau=1.0)
        rec.detail = (f"N=2 mismatches {mism_n}, P=0 mismatches {mism_e}, alpha=1 rhs {full:.12f}, "
                      f"alpha_min rhs {low.rhs:.1e}")
        assert mism_n == 0 and mism_e == 0
        assert full == pytest.approx(math.pi / 2, abs=1e-12)
        assert low.rhs == pytest.approx(0, abs=1e-7)
        assert WIDTH_THRESHOLD_NOTE in rep.notes
        _within(start, 1)


# 8 -------------------------------------------------------------------------

def test_c8_nogo_probe(criterion):
    with criterion(8, "100 seeded trials, d_S = d_A = 2") as rec:
        start = time.perf_counter()
        rep = nogo_probe(2, 2, trials=100, seed=2024)
        verdicts = {}
        for r in rep.records:
            verdicts[r.verdict] = verdicts.get(r.verdict, 0) + 1
        rec.detail = f"verdicts {dict(sorted(verdicts.items()))}"
        assert len(rep.records) == 100 and not rep.counterexamples
        _within(start, 30)


# 9 -------------------------------------------------------------------------

def test_c9_lattice(criterion):
    with criterion(9, "L = 8 random chain") as rec:
        start = time.perf_counter()
        c = random_chain(8, seed=3)
        full_err = locality_error(c, SX, 1.0, (0, 7))
        prof = locality_profile(c, SX, 1.0)
        rise = float(np.max(np.diff(prof)))
        add = 0.0
        for cut in range(7):
            left, right = box_hamiltonian(c, (0, cut)), box_hamiltonian(c, (cut + 1, 7))
            bond = embed_sites(c.phi[cut], cut, 8)
            add = max(add, float(np.max(np.abs(full_hamiltonian(c) - left - right - bond))))
        vac = audit_lattice(1.0, 0.5, 1 / 8)
        rec.detail = f"full-box error {full_err:.1e}, max rise {rise:.1e}, additivity {add:.1e}"
        assert full_err <= 1e-10 and rise <= 1e-9 and add <= 1e-12 and vac.vacuous
        _within(start, 60)


# 10 ------------------------------------------------------------------------

def _all_runs(out: Path) -> None:
    for ini in sorted(CONFIGS.glob("*.ini")):
        assert main(["run", str(ini), "--out", str(out / f"run-{ini.stem}"), "--seed", "11", "--quiet"]) == 0
    for name in ("stern_gerlach", "gaussian", "rotation_meter"):
        assert main(["sweep", str(CONFIGS / f"{name}.ini"), "--out", str(out / f"sweep-{name}"),
                     "--seed", "11", "--workers", "1", "--quiet"]) == 0
    assert main(["audit", str(CONFIGS / "audit_values.csv"), "--out", str(out / "audit"), "--quiet"]) == 0


@pytest.mark.slow
def test_c10_determinism(criterion, tmp_path):
    with criterion(10, "two seeded runs, byte-identical CSVs") as rec:
        _all_runs(tmp_path / "a")
        _all_runs(tmp_path / "b")
        a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
        b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.csv"))
        diff = [p for p in a if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
        rec.detail = f"{len(a)} CSV files compared, {len(diff)} differ"
        assert a == b and a and not diff
