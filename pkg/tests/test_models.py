import math

import numpy as np
import pytest
from scipy import integrate

from etmeasure import grids as gr
from etmeasure.errors import ConfigurationError, ValidationError
from etmeasure.grids import Bump
from etmeasure.measure import outcome_probabilities, worst_case_error
from etmeasure.models import (
    COMPUTATIONAL_PVM, KET, SIGMA_Z, FiniteModel, GaussianPacketParams, chiral_model,
    controlled_shift_model, free_model, gaussian_model, random_finite_model, rotation_meter_model,
    standard_model, stern_gerlach_2d, xi_gradient_norm,
)
from etmeasure.qcore import SX


@pytest.fixture(scope="module")
def sg():
    return stern_gerlach_2d()


@pytest.fixture(scope="module")
def model():
    return gaussian_model(GaussianPacketParams())


@pytest.fixture(scope="module")
def chiral():
    return chiral_model()


class TestFiniteModels:
    def test_random_reproducible(self):
        a, b = random_finite_model(2, 3, 7), random_finite_model(2, 3, 7)
        for attr in ("h_s", "h_a", "v", "sigma0"):
            np.testing.assert_array_equal(getattr(a, attr), getattr(b, attr))
        assert not np.array_equal(a.v, random_finite_model(2, 3, 8).v)

    def test_random_normalized_and_hermitian(self):
        m = random_finite_model(3, 4, 1)
        assert m.v_norm == pytest.approx(1, abs=1e-9)
        for x in (m.h_s, m.h_a, m.v):
            assert np.max(np.abs(x - x.conj().T)) <= 1e-12
        assert m.pvm is None and m.meter is None

    def test_random_capacity(self):
        with pytest.raises(ConfigurationError):
            random_finite_model(8, 9, 0)

    def test_validation(self):
        z = np.zeros((2, 2))
        with pytest.raises(ValidationError):
            FiniteModel("bad", z, z, np.zeros((4, 4)), np.diag([1.0, 0.0]),
                        meter=(np.eye(2), np.eye(2)))
        with pytest.raises(ValidationError):
            FiniteModel("bad", z, z, np.zeros((4, 4)), np.diag([1.0, 0.0]),
                        pvm=(np.eye(2) / 2, np.eye(2) / 2))
        with pytest.raises(ValidationError):
            FiniteModel("bad", np.array([[0, 1], [0, 0]]), z, np.zeros((4, 4)), np.diag([1.0, 0.0]))

    def test_free_model_coin(self):
        m = free_model()
        assert worst_case_error(m).value == pytest.approx(0.5)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_controlled_shift_perfect(self, n):
        m = controlled_shift_model(n)
        assert worst_case_error(m).value < 1e-12

    def test_controlled_shift_is_cnot(self):
        m = controlled_shift_model(2)
        u = __import__("scipy.linalg", fromlist=["expm"]).expm(-1j * m.tau * m.v)
        cnot = np.eye(4)[[0, 1, 3, 2]]
        assert abs(abs(np.trace(u.conj().T @ cnot)) - 4) < 1e-10

    def test_rotation_meter(self):
        m = rotation_meter_model(2.0)
        assert m.v_norm * m.tau == pytest.approx(math.pi / 4)
        assert worst_case_error(m).value < 1e-12

    def test_purified_same_statistics(self):
        m = random_finite_model(2, 2, 3)
        rho = np.diag([0.3, 0.7]).astype(complex)
        mixed = FiniteModel("mixed", m.h_s, m.h_a, m.v, rho, tau=1.0, pvm=COMPUTATIONAL_PVM,
                            meter=COMPUTATIONAL_PVM)
        pur = mixed.purified()
        psi = np.array([0.6, 0.8j])
        np.testing.assert_allclose(mixed.restricted_state(psi, 0.9), pur.restricted_state(psi, 0.9), atol=1e-12)
        np.testing.assert_allclose(outcome_probabilities(mixed, psi), outcome_probabilities(pur, psi), atol=1e-12)


class TestStandardModel:
    def test_outcomes(self):
        w = 0.05
        m = standard_model(pointer_width=w, tau=4 * w)
        p0 = outcome_probabilities(m, KET[0])
        p1 = outcome_probabilities(m, KET[1])
        assert p0[0] >= 1 - 1e-6 and p1[1] >= 1 - 1e-6
        assert worst_case_error(m).value <= 1e-6

    def test_sigma_z_convention(self):
        np.testing.assert_array_equal(np.diag(SIGMA_Z).real, [-1, 1])

    def test_pointer_too_wide(self):
        with pytest.raises(ConfigurationError):
            standard_model(pointer_width=0.05, tau=1.0, grid=gr.GridSpec(256, -0.5, 0.5))

    def test_exact_matches_split(self):
        m = standard_model(pointer_width=0.1, tau=0.5, grid_n=512)
        for s, e in zip(m.branch_states(0.5, "split"), m.branch_states(0.5, "exact")):
            assert s.with_psi(s.psi - e.psi).norm() < 1e-9


class TestChiralModel:
    def test_support_violation(self):
        with pytest.raises(ConfigurationError):
            chiral_model(phi0=Bump(-1.0, 0.5))
        with pytest.raises(ConfigurationError):
            chiral_model(g=Bump(-0.5, 1.0))

    def test_tau(self, chiral):
        assert chiral.tau == pytest.approx(2.0)

    def test_phase_after_passage(self, chiral):
        t = 1.3 * chiral.tau
        free = chiral.free_state(t).psi
        mask = np.abs(free) > 1e-3 * np.abs(free).max()
        total = chiral.params["phase_total"]
        for b, br in zip(chiral.coupling_values, chiral.branch_states(t, "exact")):
            ratio = br.psi[mask] / free[mask]
            np.testing.assert_allclose(ratio, np.exp(-1j * b * total), atol=1e-9)

    def test_branch_overlap_quadrature(self, chiral):
        g, phi0 = Bump(0.0, 1.0), gr.normalized_bump(-1.0, 0.0)

        def oracle(t):
            # |<phi^1|phi^0>| with relative phase exp(2i int_{x-t}^x g)
            def integrand(x, part):
                z = phi0(np.array(x - t)) ** 2 * np.exp(2j * g.integral(np.array(x - t), np.array(x)))
                return z.real if part == 0 else z.imag
            lo, hi = -1.0 + t, t
            re = integrate.quad(integrand, lo, hi, args=(0,), epsabs=1e-13, limit=200)[0]
            im = integrate.quad(integrand, lo, hi, args=(1,), epsabs=1e-13, limit=200)[0]
            return abs(re + 1j * im)

        for t in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
            b0, b1 = chiral.branch_states(t, "exact")
            assert abs(b1.inner(b0)) == pytest.approx(oracle(t), abs=1e-8)
        # before and after the passage the branches differ by a global phase only
        for t in (0.0, 2.0, 3.0):
            b0, b1 = chiral.branch_states(t, "exact")
            assert abs(b1.inner(b0)) == pytest.approx(1, abs=1e-10)

    @pytest.mark.parametrize("frac", [0.5, 1.0, 2.0])
    def test_exact_vs_split(self, chiral, frac):
        t = frac * chiral.tau
        for s, e in zip(chiral.branch_states(t, "split"), chiral.branch_states(t, "exact")):
            assert s.with_psi(s.psi - e.psi).norm() < 1e-6


class TestGaussianModel:
    def test_derived(self):
        p = GaussianPacketParams(m=2.0, k=3.0, T=1.5, Delta=0.5)
        assert p.v_g == pytest.approx(1.5)
        assert p.x0 == pytest.approx(-3.0)
        with pytest.raises(ConfigurationError):
            GaussianPacketParams(sigma=-1)

    def test_packet_normalized_and_solves_free_equation(self):
        p = GaussianPacketParams()
        for s in (0.0, 0.7, 2.0):
            n = integrate.quad(lambda x: abs(p.packet(s, x)) ** 2, -60, 40, limit=200)[0]
            assert n == pytest.approx(1, abs=1e-10)
        # i d/ds phi = -(1/2m) phi'' checked by finite differences
        x, s, h = np.linspace(-8, 2, 11), 0.4, 1e-4
        dt = (p.packet(s + h, x) - p.packet(s - h, x)) / (2 * h)
        dxx = (p.packet(s, x + h) - 2 * p.packet(s, x) + p.packet(s, x - h)) / h ** 2
        np.testing.assert_allclose(1j * dt, -dxx / (2 * p.m), atol=1e-5)

    def test_mean_position(self, model):
        p = model.params["packet"]
        for s in np.linspace(0, p.T, 6):
            mean, _ = gr.position_moments(model.free_state(s - p.T))
            assert mean == pytest.approx(p.mean_position(s), rel=1e-6)

    def test_spread_formula_at_zero(self):
        p = GaussianPacketParams(sigma=1.3)
        assert p.spread_formula(0.0) == pytest.approx(1.3)

    def test_spread_exact(self, model):
        p = model.params["packet"]
        for s in np.linspace(0, p.T, 6):
            _, sd = gr.position_moments(model.free_state(s - p.T))
            assert sd == pytest.approx(p.spread(s), rel=1e-6)
            assert sd == pytest.approx(p.spread_formula(s) / np.sqrt(2), rel=1e-6)

    def test_leakage_k_sweep(self):
        leaks = []
        for k in (2, 4, 8, 16):
            p = GaussianPacketParams(k=k)
            leak = gr.interval_probability(gaussian_model(p).free_state(0.0), 0.0)
            assert leak <= p.chebyshev_bound(p.T)
            leaks.append(leak)
        assert all(b < a for a, b in zip(leaks, leaks[1:]))

    def test_leakage_below_chebyshev_all_times(self, model):
        p = model.params["packet"]
        for s in np.linspace(0, p.T, 11):
            leak = gr.interval_probability(model.free_state(s - p.T), 0.0)
            assert leak <= p.chebyshev_bound(s) and leak <= p.chebyshev_bound(s, per_time=True)

    def test_v_support(self):
        with pytest.raises(ConfigurationError):
            gaussian_model(GaussianPacketParams(), SX, Bump(-1.0, 1.0))


class TestSternGerlach:
    def test_spin_up_goes_up(self, sg):
        p = outcome_probabilities(sg, KET[1])
        assert p[1] >= 1 - 1e-6
        p = outcome_probabilities(sg, KET[0])
        assert p[0] >= 1 - 1e-6

    def test_mixed_input_half(self, sg):
        np.testing.assert_allclose(outcome_probabilities(sg, np.eye(2) / 2), [0.5, 0.5], atol=1e-6)

    def test_energy_fluctuation_oracle(self, sg):
        assert sg.apparatus_energy_fluctuation() == pytest.approx(xi_gradient_norm(sg.params["xi"]), rel=1e-6)

    def test_rescaling(self):
        a, b = stern_gerlach_2d(scale=1.0), stern_gerlach_2d(scale=2.0)
        assert b.tau == pytest.approx(a.tau / 2)
        dha, dhb = a.apparatus_energy_fluctuation(), b.apparatus_energy_fluctuation()
        assert dhb == pytest.approx(2 * dha, rel=1e-6)
        assert b.tau * dhb == pytest.approx(a.tau * dha, rel=1e-6)

    def test_product_above_threshold(self, sg):
        assert sg.tau * sg.apparatus_energy_fluctuation() >= math.pi / 4

    def test_epsilon_condition(self):
        with pytest.raises(ConfigurationError, match="epsilon condition"):
            stern_gerlach_2d(epsilon=0.25, kick=0.2)

    def test_variance_note(self, sg):
        assert any("variance" in n for n in sg.notes)

    def test_default_kick(self, sg):
        assert sg.params["kick"] == pytest.approx(4 * sg.params["epsilon"])

    @pytest.mark.slow
    @pytest.mark.xfail(strict=True, reason="2D split-step at 256x256 under-resolves the x-shear "
                                          "of the z-displacement; error ~8e-3 (see convergence test)")
    def test_exact_vs_split_default_grid(self, sg):
        for s, e in zip(sg.branch_states(sg.tau, "split"), sg.branch_states(sg.tau, "exact")):
            assert s.with_psi(s.psi - e.psi).norm() < 1e-6

    @pytest.mark.slow
    def test_split_measures_correctly(self, sg):
        p = outcome_probabilities(sg, KET[1], method="split")
        assert p[1] >= 1 - 1e-5
