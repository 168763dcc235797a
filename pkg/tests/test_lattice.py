import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from etmeasure.errors import ArgumentError, CapacityError, ValidationError
from etmeasure.lattice import (
    ChainSpec, box_energy_fluctuation, box_hamiltonian, embed_sites, full_hamiltonian, heisenberg,
    locality_error, locality_profile, product_state, random_chain, random_product_state,
    rastegin_check,
)
from etmeasure.qcore import SX, SZ

UP, DOWN = np.array([1.0, 0.0]), np.array([0.0, 1.0])


@pytest.fixture(scope="module")
def chain():
    return random_chain(6, seed=3)


class TestBoxes:
    def test_embed(self):
        op = embed_sites(SZ, 1, 3)
        np.testing.assert_array_equal(op, np.kron(np.kron(np.eye(2), SZ), np.eye(2)))

    def test_single_site_box(self, chain):
        np.testing.assert_allclose(box_hamiltonian(chain, (2, 2)), embed_sites(chain.h[2], 2, chain.L))

    @settings(max_examples=20)
    @given(st.integers(0, 4), st.integers(0, 5))
    def test_additivity(self, cut, seed):
        c = random_chain(6, seed)
        cut = min(cut, c.L - 2)
        left, right = box_hamiltonian(c, (0, cut)), box_hamiltonian(c, (cut + 1, c.L - 1))
        bond = embed_sites(c.phi[cut], cut, c.L)
        assert np.max(np.abs(full_hamiltonian(c) - left - right - bond)) <= 1e-12

    def test_invalid_boxes(self, chain):
        with pytest.raises(ArgumentError):
            box_hamiltonian(chain, (3, 2))
        with pytest.raises(ArgumentError):
            box_hamiltonian(chain, (0, 6))

    def test_validation(self):
        with pytest.raises(CapacityError):
            random_chain(13, 0)
        with pytest.raises(ValidationError):
            ChainSpec(2, (SZ, SZ), (2 * np.kron(SZ, SZ),), 1.0)


class TestDynamics:
    def test_heisenberg_oracle(self, chain):
        h = full_hamiltonian(chain)
        a = embed_sites(SX, 0, chain.L)
        u = expm(1j * h * 0.7)
        np.testing.assert_allclose(heisenberg(h, a, 0.7), u @ a @ u.conj().T, atol=1e-10)

    def test_norm_preserved(self, chain):
        a = embed_sites(SX, 0, chain.L)
        assert np.linalg.norm(heisenberg(full_hamiltonian(chain), a, 2.0), 2) == pytest.approx(1)

    def test_full_box_exact(self, chain):
        assert locality_error(chain, SX, 1.0, (0, chain.L - 1)) <= 1e-10

    def test_profile_nonincreasing(self, chain):
        prof = locality_profile(chain, SX, 1.0)
        assert np.all(np.diff(prof) <= 1e-9)
        assert prof[-1] <= 1e-10

    def test_box_must_hold_site0(self, chain):
        with pytest.raises(ArgumentError):
            locality_error(chain, SX, 1.0, (1, 3))

    def test_commuting_chain_is_local(self):
        # on-site Z fields and ZZ bonds commute with Z at site 0
        c = ChainSpec(4, (SZ,) * 4, (np.kron(SZ, SZ),) * 3, 1.0)
        np.testing.assert_allclose(locality_profile(c, SZ, 3.0), 0, atol=1e-12)


class TestFluctuations:
    def test_eigenstate_has_no_fluctuation(self):
        c = ChainSpec(3, (SZ,) * 3, (np.kron(SZ, SZ),) * 2, 1.0)
        assert box_energy_fluctuation(c, (0, 2), [UP, DOWN, UP]) == pytest.approx(0, abs=1e-12)

    def test_single_site_x_state(self):
        c = ChainSpec(2, (SZ, SZ), (np.zeros((4, 4)),), 1.0)
        plus = np.array([1, 1]) / np.sqrt(2)
        # Z in |+> has standard deviation 1
        assert box_energy_fluctuation(c, (0, 0), [plus, UP]) == pytest.approx(1)
        assert box_energy_fluctuation(c, (0, 1), [plus, plus]) == pytest.approx(np.sqrt(2))

    def test_product_state(self, rng):
        sites = random_product_state(3, rng)
        psi = product_state(sites)
        assert np.linalg.norm(psi) == pytest.approx(1)
        assert psi.shape == (8,)

    def test_wrong_state_count(self, chain):
        with pytest.raises(ArgumentError):
            box_energy_fluctuation(chain, (0, 1), [UP])


class TestRastegin:
    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_triangle(self, d):
        res = rastegin_check(100, d, seed=d)
        assert res.passed and res.min_slack >= -1e-9
