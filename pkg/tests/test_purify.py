import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as orc
from qem.purify import (
    ConvergenceError,
    cyclic_shift_permutation,
    echo_state,
    echo_verification,
    mcweeny,
    spectrum_diagnostics,
    vd_expectation,
    vd_state,
    vd_swap_check,
)

RHO_82 = np.diag([0.8, 0.2]).astype(complex)
SWAP = (orc.pauli("II") + orc.pauli("XX") + orc.pauli("YY") + orc.pauli("ZZ")) / 2


def global_depolarized(n, lam, rng):
    psi = orc.random_density(n, rng, rank=1)
    f = math.exp(-lam)
    return f * psi + (1 - f) * np.eye(2**n) / 2**n


class TestVirtualDistillation:
    @pytest.mark.parametrize("m", [1, 2, 3, 5])
    def test_pure_state_unchanged(self, rng, m):
        psi = orc.random_density(2, rng, rank=1)
        est = vd_expectation(psi, "XZ", m)
        assert est.value == pytest.approx(np.real(np.trace(orc.pauli("XZ") @ psi)), abs=1e-12)
        assert est.trace_rhoM == pytest.approx(1.0)

    def test_m1_is_raw(self):
        assert vd_expectation(RHO_82, "Z", 1).value == pytest.approx(0.6)

    def test_two_copies(self):
        est = vd_expectation(RHO_82, "Z", 2)
        assert est.value == pytest.approx(0.6 / 0.68, abs=1e-12)
        assert est.value == pytest.approx(0.88235, abs=1e-5)
        assert est.overhead == pytest.approx(0.68**-2)

    def test_six_copies(self):
        want = (0.8**6 - 0.2**6) / (0.8**6 + 0.2**6)
        assert vd_expectation(RHO_82, "Z", 6).value == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(0.99951, abs=1e-5)

    def test_monotone_in_copies(self):
        vals = [vd_expectation(RHO_82, "Z", m).value for m in range(1, 9)]
        assert all(a < b for a, b in zip(vals, vals[1:])) and vals[-1] < 1

    def test_bad_degree(self):
        with pytest.raises(ValueError):
            vd_expectation(RHO_82, "Z", 0)

    def test_vanishing_trace(self):
        with pytest.raises(ValueError):
            vd_expectation(np.zeros((2, 2)), "Z", 2)

    def test_state(self):
        np.testing.assert_allclose(vd_state(RHO_82, 2).elements, np.diag([0.64, 0.04]) / 0.68)


class TestSwapOracle:
    def test_explicit_swap(self):
        # two copies of one qubit: the cyclic shift is the SWAP gate
        sigma = cyclic_shift_permutation(1, 2)
        shift = np.zeros((4, 4))
        shift[sigma, np.arange(4)] = 1
        np.testing.assert_allclose(shift, SWAP.real)

    def test_numerator(self):
        assert vd_swap_check(RHO_82, "Z", 2) == pytest.approx(0.6, abs=1e-12)
        big = np.kron(orc.P["Z"] @ RHO_82, RHO_82)
        assert np.real(np.trace(SWAP @ big)) == pytest.approx(0.6, abs=1e-12)

    def test_m1(self, rng):
        rho = orc.random_density(2, rng)
        assert vd_swap_check(rho, "YX", 1) == pytest.approx(np.real(np.trace(orc.pauli("YX") @ rho)))

    def test_identity_gives_purity_powers(self, rng):
        rho = orc.random_density(2, rng)
        for m in (2, 3):
            assert vd_swap_check(rho, "II", m) == pytest.approx(np.real(np.trace(np.linalg.matrix_power(rho, m))))

    @pytest.mark.parametrize("n,m", [(n, m) for n in (1, 2, 3) for m in (1, 2, 3)])
    def test_matches_matrix_powers(self, n, m):
        g = np.random.default_rng(100 * n + m)
        rho = orc.random_density(n, g)
        o = g.normal(size=(2**n, 2**n)) + 1j * g.normal(size=(2**n, 2**n))
        o = o + o.conj().T
        est = vd_expectation(rho, o, m)
        assert vd_swap_check(rho, o, m) == pytest.approx(est.value * est.trace_rhoM, abs=1e-10)

    def test_large_gather_path(self, rng):
        # 3 copies of 3 qubits uses the sparse route
        rho = orc.random_density(3, rng)
        want = np.real(np.trace(orc.pauli("XYZ") @ np.linalg.matrix_power(rho, 3)))
        assert vd_swap_check(rho, "XYZ", 3) == pytest.approx(want, abs=1e-10)

    def test_size_guard(self):
        with pytest.raises(ValueError):
            vd_swap_check(np.eye(16) / 16, "ZIII", 4)


class TestEcho:
    def test_pure(self, rng):
        psi = orc.random_density(2, rng, rank=1)
        est = echo_verification(psi, "ZX")
        assert est.value == pytest.approx(np.real(np.trace(orc.pauli("ZX") @ psi)))
        assert est.overhead == pytest.approx(1.0)

    def test_matches_vd_two(self, rng):
        assert echo_verification(RHO_82, "Z").value == pytest.approx(0.88235, abs=1e-5)
        rho = orc.random_density(2, rng)
        assert echo_verification(rho, "XX").value == pytest.approx(vd_expectation(rho, "XX", 2).value, abs=1e-12)

    def test_ideal_reference(self, rng):
        rho0 = orc.random_density(2, rng, rank=1)
        # error part lives in the orthogonal complement, so rho commutes with rho0
        comp = np.eye(4) - rho0
        sigma = comp @ orc.random_density(2, rng) @ comp
        rho = 0.6 * rho0 + 0.4 * sigma / np.trace(sigma)
        o = orc.pauli("YZ")
        est = echo_verification(rho, o, rho_bar=rho0)
        assert est.value == pytest.approx(np.real(np.trace(o @ rho0)), abs=1e-12)
        assert est.overhead == pytest.approx(1 / 0.6)

    def test_ideal_reference_with_overlapping_error(self, rng):
        # an error component with weight along rho0 leaves a residual
        rho0 = orc.random_density(2, rng, rank=1)
        rho = 0.6 * rho0 + 0.4 * orc.random_density(2, rng)
        o = orc.pauli("YZ")
        est = echo_verification(rho, o, rho_bar=rho0)
        assert abs(est.value - np.real(np.trace(o @ rho0))) > 1e-3

    def test_vanishing_overlap(self):
        with pytest.raises(ValueError):
            echo_verification(np.diag([1.0, 0]), "Z", rho_bar=np.diag([0, 1.0]))

    def test_state(self):
        np.testing.assert_allclose(echo_state(RHO_82).elements, np.diag([0.64, 0.04]) / 0.68)


class TestSpectrum:
    def test_dominant_convergence(self):
        for seed in range(10):
            g = np.random.default_rng(seed)
            rho = orc.random_density(2, g)
            o = orc.pauli("XZ")
            diag = spectrum_diagnostics(rho, o)
            ratio = diag.p2 / diag.p1
            errs = [abs(vd_expectation(rho, o, m).value - diag.dominant_value) for m in range(1, 12)]
            # geometric decay at rate p2/p1
            const = max(e / ratio ** (m - 1) for m, e in zip(range(1, 12), errs))
            assert const <= 2 * (2**2)
            assert errs[-1] <= errs[0] * ratio**5 * 10 + 1e-12

    def test_coherent_mismatch_not_removed(self, rng):
        # dominant eigenvector rotated away from the ideal |0>
        theta = 0.4
        phi = np.array([math.cos(theta / 2), math.sin(theta / 2)])
        rho = 0.9 * np.outer(phi, phi) + 0.1 * np.eye(2) / 2
        target = math.cos(theta)
        assert vd_expectation(rho, "Z", 30).value == pytest.approx(target, abs=1e-10)
        assert abs(target - 1.0) > 0.05
        assert spectrum_diagnostics(rho, "Z").dominant_value == pytest.approx(target)

    @pytest.mark.parametrize("lam", [0.5, 1.0])
    @pytest.mark.parametrize("m", [2, 3])
    def test_overhead_floor(self, rng, lam, m):
        rho = global_depolarized(6, lam, rng)
        measured = vd_expectation(rho, "Z" * 6, m).overhead
        floor = math.exp(2 * m * lam) / (1 + (math.exp(lam) - 1) ** m) ** 2
        assert measured >= floor * 0.99


class TestMcWeeny:
    def test_diagonal(self):
        np.testing.assert_allclose(mcweeny(np.diag([0.9, 0.1])), np.diag([1.0, 0.0]), atol=1e-12)

    def test_fixed_point(self):
        p = orc.bell()
        out, iters = mcweeny(p, full_output=True)
        assert iters == 0
        np.testing.assert_allclose(out, p)

    def test_half_is_flagged(self):
        with pytest.raises(ConvergenceError):
            mcweeny(np.diag([0.5, 0.5]))

    def test_max_iter(self):
        with pytest.raises(ConvergenceError):
            mcweeny(np.diag([0.5 + 1e-6, 0.1]), max_iter=3)

    @pytest.mark.parametrize("bad", [np.diag([1.3, 0.0]), np.array([[0.5, 0.2], [0.1, 0.5]]), np.ones(3)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            mcweeny(bad)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_rotated_spectrum(self, seed):
        g = np.random.default_rng(seed)
        vals = g.uniform(-0.09, 1.09, 4)
        vals = np.where(np.abs(vals - 0.5) < 0.05, vals + 0.1, vals)
        q, _ = np.linalg.qr(g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4)))
        d = q @ np.diag(vals) @ q.conj().T
        out = mcweeny(d, tol=1e-10)
        np.testing.assert_allclose(out @ out, out, atol=1e-9)
        want = q @ np.diag((vals > 0.5).astype(float)) @ q.conj().T
        np.testing.assert_allclose(out, want, atol=1e-8)
