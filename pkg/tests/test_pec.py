import math

import numpy as np
import pytest

import oracles as orc
from qem.core import (
    CompleteDepolarizing,
    Location,
    NoisyCircuit,
    PauliChannel,
    coherent_z_rotation,
    dephasing,
    expectation,
    gate,
    identity,
    run_circuit,
)
from qem.core.channels import amplitude_damping
from qem.core.circuit import circuit_fault_rate
from qem.pec import (
    MAX_PATTERNS,
    circuit_overhead,
    decompose_circuit,
    decompose_inversion,
    decompose_noisy_gate,
    invert_pauli_channel,
    inversion_gamma,
    partial_pec,
    pattern_count,
    pec_mitigate,
    rewrite_gamma,
)
from qem.stats import bias_fidelity_bound


def dephasing_five():
    """2 qubits, 5 locations, each followed by Z dephasing on its targets with p = 0.05."""
    z = PauliChannel({"Z": 1.0})
    zz = PauliChannel({"ZI": 1 / 3, "IZ": 1 / 3, "ZZ": 1 / 3})
    return NoisyCircuit(
        2,
        (
            Location(gate("H", 0), z, 0.05),
            Location(gate("H", 1), z, 0.05),
            Location(gate("CZ", 0, 1), zz, 0.05),
            Location(gate("H", 1), z, 0.05),
            Location(gate("RY", 0, theta=0.4), z, 0.05),
        ),
    )


def random_pauli_location(rng, n, p_max=0.2, clifford=False):
    if n > 1 and rng.random() < 0.4:
        a, b = (int(v) for v in rng.choice(n, 2, replace=False))
        g = gate(str(rng.choice(["CNOT", "CZ"])), a, b)
    else:
        q = int(rng.integers(n))
        if clifford:
            g = gate(str(rng.choice(["H", "S", "X"])), q)
        else:
            g = gate("RY", q, theta=float(rng.uniform(0, 3)))
    k = g.n_targets
    w = rng.random(4**k)
    w[0] = rng.random() * 0.5
    probs = dict(zip(orc.all_paulis(k), w / w.sum()))
    return Location(g, PauliChannel(probs), float(rng.uniform(0.01, p_max)))


def random_circuit(rng, n, depth, **kw):
    return NoisyCircuit(n, tuple(random_pauli_location(rng, n, **kw) for _ in range(depth)))


def zero_mean_pauli(c):
    rho = run_circuit(c, 0.0)
    for lab in orc.all_paulis(c.n_qubits)[1:]:
        if abs(expectation(rho, lab)) < 1e-12:
            return lab
    raise AssertionError("no Pauli with vanishing ideal value")


class TestInversion:
    def test_identity(self):
        assert invert_pauli_channel(identity(1)) == {"I": 1.0}

    @pytest.mark.parametrize("p", [0.01, 0.1, 0.3])
    def test_dephasing(self, p):
        q = invert_pauli_channel(dephasing(p))
        assert q["I"] == pytest.approx((1 - p) / (1 - 2 * p))
        assert q["Z"] == pytest.approx(-p / (1 - 2 * p))
        assert inversion_gamma(dephasing(p)) == pytest.approx(1 / (1 - 2 * p))
        # brute force: the signed mixture of Z-conjugations composed with the channel
        fwd = orc.ptm(lambda m: orc.pauli_channel(m, {"I": 1 - p, "Z": p}, (0,), 1), 1)
        inv = orc.ptm(lambda m: sum(v * orc.pauli(k) @ m @ orc.pauli(k) for k, v in q.items()), 1)
        np.testing.assert_allclose(inv @ fwd, np.eye(4), atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_two_qubit_random(self, seed):
        g = np.random.default_rng(seed)
        w = g.random(16)
        w[0] += 8
        probs = dict(zip(orc.all_paulis(2), w / w.sum()))
        q = invert_pauli_channel(PauliChannel(probs))
        fwd = orc.ptm(lambda m: orc.pauli_channel(m, probs, (0, 1), 2), 2)
        inv = orc.ptm(lambda m: sum(v * orc.pauli(k) @ m @ orc.pauli(k) for k, v in q.items()), 2)
        np.testing.assert_allclose(inv @ fwd, np.eye(16), atol=1e-10)

    def test_depolarizing_gammas(self):
        loc = Location(gate("I", 0), CompleteDepolarizing(1), 0.1)
        p_prime = 0.1 * 3 / 4
        assert decompose_noisy_gate(loc).gamma == pytest.approx((1 + p_prime) / (1 - p_prime))
        assert decompose_noisy_gate(loc).gamma == pytest.approx(1.162162, abs=1e-6)
        # full-channel inversion: fidelity 0.9 on X, Y, Z
        assert decompose_inversion(loc).gamma == pytest.approx((1 + 3 / 0.9) / 4 + 3 * (1 / 0.9 - 1) / 4)
        assert decompose_inversion(loc).gamma == pytest.approx(1.166667, abs=1e-6)

    def test_singular(self):
        with pytest.raises(ValueError):
            invert_pauli_channel(dephasing(0.5))


class TestRewrite:
    @pytest.mark.parametrize("p,gamma_sq", [(0.0, 1.0), (0.01, (1.01 / 0.99) ** 2), (0.5, 9.0)])
    def test_gamma(self, p, gamma_sq):
        loc = Location(gate("H", 0), PauliChannel({"X": 1.0}), p)
        assert decompose_noisy_gate(loc).gamma ** 2 == pytest.approx(gamma_sq)
        assert rewrite_gamma(p) ** 2 == pytest.approx(gamma_sq)

    def test_p_001_value(self):
        assert rewrite_gamma(0.01) ** 2 == pytest.approx(1.040812, abs=1e-6)

    def test_non_pauli_needs_twirl(self):
        loc = Location(gate("H", 0), coherent_z_rotation(0.2), 0.5)
        with pytest.raises(ValueError):
            decompose_noisy_gate(loc)
        d = decompose_noisy_gate(loc, twirl=True)
        assert d.gamma > 1

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("method", ["rewrite", "inversion"])
    def test_transfer_identity(self, seed, method):
        loc = random_pauli_location(np.random.default_rng(seed), 2, p_max=0.4)
        d = decompose_noisy_gate(loc) if method == "rewrite" else decompose_inversion(loc)
        ideal = d.ideal_transfer_matrix()
        np.testing.assert_allclose(d.transfer_matrix(), ideal, atol=1e-8)
        # independent ideal transfer matrix from the oracle
        local_targets = tuple(sorted(loc.qubits()).index(t) for t in loc.gate.targets)
        u = orc.embed(loc.gate.matrix, local_targets, len(loc.qubits()))
        np.testing.assert_allclose(ideal, orc.ptm(lambda m: u @ m @ u.conj().T, len(loc.qubits())), atol=1e-12)
        assert d.gamma >= 1

    def test_partial_transfer(self):
        loc = Location(gate("H", 0), PauliChannel({"X": 0.5, "Y": 0.5}), 0.3)
        d = decompose_noisy_gate(loc, residual_fraction=0.4)
        target = decompose_noisy_gate(Location(loc.gate, loc.error, 0.12), residual_fraction=1.0)
        np.testing.assert_allclose(d.transfer_matrix(), target.transfer_matrix(), atol=1e-12)

    def test_gamma_one_iff_noiseless(self):
        assert decompose_noisy_gate(Location(gate("H", 0))).gamma == 1
        assert decompose_noisy_gate(Location(gate("H", 0), dephasing(1.0), 1e-6)).gamma > 1
        # identity-only error part is no fault at all
        assert decompose_noisy_gate(Location(gate("H", 0), identity(1), 0.3)).gamma == 1


class TestCircuitOverhead:
    def test_hundred_gates(self):
        c = NoisyCircuit(1, tuple(Location(gate("I", 0), dephasing(1.0), 0.01) for _ in range(100)))
        total = circuit_overhead(c)
        assert total == pytest.approx(((1.01 / 0.99) ** 2) ** 100)
        assert total == pytest.approx(54.6054, abs=1e-4)
        assert abs(total - math.exp(4)) / math.exp(4) < 1e-3

    def test_noiseless(self):
        assert circuit_overhead(NoisyCircuit(1, (Location(gate("H", 0)),))) == 1

    def test_extreme_rate_beats_postselection_floor(self):
        c = NoisyCircuit(1, tuple(Location(gate("I", 0), dephasing(1.0), 0.01) for _ in range(500)))
        assert circuit_fault_rate(c) == pytest.approx(5)
        assert circuit_overhead(c) == pytest.approx(math.exp(20), rel=0.01)
        assert circuit_overhead(c) > 150


class TestMitigate:
    def test_noiseless_is_raw(self):
        c = NoisyCircuit(1, (Location(gate("H", 0)),))
        rep = pec_mitigate(c, "X", 1000, 1)
        assert rep.mean == 1.0 and rep.extras["predicted_overhead"] == 1

    @pytest.mark.parametrize("method", ["rewrite", "inversion"])
    def test_exact_five_locations(self, method):
        c = dephasing_five()
        raw = expectation(run_circuit(c), "XX")
        rep = pec_mitigate(c, "XX", mode="exact", method=method)
        # rewrite: two terms per location; inversion: {I, Z} per 1-qubit location, 4 on the CZ
        assert rep.extras["patterns"] == (2**5 if method == "rewrite" else 2**4 * 4)
        assert abs(rep.bias) <= 1e-9
        assert abs(raw - rep.reference) >= 0.01

    def test_propagate_matches_exact(self):
        c = dephasing_five()
        a = pec_mitigate(c, "XX", mode="exact")
        b = pec_mitigate(c, "XX", mode="propagate")
        assert a.mean == pytest.approx(b.mean, abs=1e-12)

    def test_enumeration_guard(self):
        c = random_circuit(np.random.default_rng(0), 2, 13)
        assert pattern_count(decompose_circuit(c)) > MAX_PATTERNS
        with pytest.raises(ValueError):
            pec_mitigate(c, "ZZ", mode="exact")

    @pytest.mark.parametrize("seed", range(6))
    def test_unbiased_small_circuits(self, seed):
        c = random_circuit(np.random.default_rng(50 + seed), 2, 3, p_max=0.3)
        for method in ("rewrite", "inversion"):
            rep = pec_mitigate(c, {"XZ": 0.5, "YY": 1.0, "ZI": -0.3}, mode="exact", method=method)
            assert abs(rep.bias) <= 1e-9

    def test_sampled_within_four_sigma(self):
        c = dephasing_five()
        rep = pec_mitigate(c, "XX", 1_000_000, 12)
        var_raw = 1 - expectation(run_circuit(c), "XX") ** 2
        sigma = math.sqrt(rep.extras["predicted_overhead"] * var_raw / rep.n_shots)
        assert abs(rep.bias) < 4 * sigma

    def test_pattern_engine_on_four_qubits(self):
        c = random_circuit(np.random.default_rng(9), 4, 5, p_max=0.15)
        exact = pec_mitigate(c, "ZZZZ", mode="propagate")
        rep = pec_mitigate(c, "ZZZZ", 40_000, 3)
        assert abs(rep.bias) <= 1e-9 or abs(exact.bias) <= 1e-9
        assert abs(rep.mean - exact.mean) < 4 * math.sqrt(rep.variance / rep.n_shots)

    def test_reproducible(self):
        c = dephasing_five()
        a, b = pec_mitigate(c, "XX", 5000, 77), pec_mitigate(c, "XX", 5000, 77)
        assert a.mean == b.mean and a.variance == b.variance

    def test_overhead_law_randomized(self):
        g = np.random.default_rng(2024)
        for _ in range(20):
            lam = g.uniform(0.1, 1.0)
            c = random_circuit(g, 2, 6, clifford=True)
            scale = lam / circuit_fault_rate(c)
            if scale * c.max_p() >= 1:
                continue
            c = c.scaled(scale)
            label = zero_mean_pauli(c)
            rep = pec_mitigate(c, label, 20_000, int(g.integers(1 << 30)))
            assert rep.extras["measured_overhead"] == pytest.approx(rep.extras["predicted_overhead"], rel=0.10)

    def test_bias_fidelity_bound(self):
        c = dephasing_five()
        rep = pec_mitigate(c, "XX", mode="propagate")
        rho0 = run_circuit(c, 0.0).elements
        bound = bias_fidelity_bound(1.0, rho0, rep.extras["rho_em"])
        assert abs(rep.bias) <= bound + 1e-9

    def test_twirled_coherent_noise(self):
        c = NoisyCircuit(
            1, (Location(gate("H", 0), coherent_z_rotation(0.3), 0.5), Location(gate("S", 0), amplitude_damping(0.2), 0.4))
        )
        rep = pec_mitigate(c, "Y", mode="exact", twirl=True)
        assert abs(rep.bias) <= 1e-9


class TestPartial:
    def test_target_equals_rate_is_noop(self):
        c = dephasing_five()
        rep = partial_pec(c, circuit_fault_rate(c), "XX", mode="exact")
        assert rep.mean == pytest.approx(expectation(run_circuit(c), "XX"), abs=1e-12)
        assert rep.extras["predicted_overhead"] == 1

    def test_target_zero_is_full(self):
        c = dephasing_five()
        assert partial_pec(c, 0.0, "XX", mode="exact").mean == pytest.approx(
            pec_mitigate(c, "XX", mode="exact").mean, abs=1e-14
        )

    def test_residual_matches_scaled_circuit(self):
        c = dephasing_five()
        lam = circuit_fault_rate(c)
        rep = partial_pec(c, 0.1, "XX", mode="exact")
        assert rep.mean == pytest.approx(expectation(run_circuit(c, 0.1 / lam), "XX"), abs=1e-12)

    def test_half_rate_overhead(self):
        c = NoisyCircuit(
            1,
            (Location(gate("H", 0)),) + tuple(Location(gate("I", 0), dephasing(1.0), 0.01) for _ in range(100)),
        )
        rep = partial_pec(c, 0.5, "Y", 400_000, 6)
        assert rep.extras["predicted_overhead"] == pytest.approx(math.exp(2), rel=0.05)
        assert rep.extras["measured_overhead"] == pytest.approx(math.exp(2), rel=0.05)

    def test_target_above_rate(self):
        with pytest.raises(ValueError):
            partial_pec(dephasing_five(), 1.0, "XX")
