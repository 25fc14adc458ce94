import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as orc
from qem.core import CompleteDepolarizing, Location, NoisyCircuit, PauliChannel, gate
from qem.core.circuit import fault_free_probability, run_circuit
from qem.learn import (
    CLIFFORDS_1Q,
    TrainingSet,
    build_training_set,
    depolarizing_rescale,
    fit_rescale_shift,
    is_clifford,
    learn_mitigate,
    make_clifford_variants,
    purity_estimate_P0,
    purity_from_P0,
)


def global_depolarizing_circuit(p=0.05):
    """Non-Clifford two-qubit circuit whose only noise is global depolarizing."""
    dep = CompleteDepolarizing(2)
    return NoisyCircuit(
        2,
        (
            Location(gate("RY", 0, theta=0.7), dep, p, (0, 1)),
            Location(gate("CNOT", 0, 1), dep, p, (0, 1)),
            Location(gate("RZ", 1, theta=0.45), dep, p, (0, 1)),
            Location(gate("T", 0)),
            Location(gate("H", 1), dep, p, (0, 1)),
            Location(gate("CZ", 0, 1), dep, p, (0, 1)),
            Location(gate("RX", 0, theta=1.1)),
        ),
    )


class TestCliffords:
    def test_group_size(self):
        assert len(CLIFFORDS_1Q) == 24

    def test_distinct_up_to_phase(self):
        for i, a in enumerate(CLIFFORDS_1Q):
            for b in CLIFFORDS_1Q[i + 1 :]:
                assert abs(abs(np.trace(a.conj().T @ b)) - 2) > 1e-6

    def test_all_are_clifford(self):
        assert all(is_clifford(u) for u in CLIFFORDS_1Q)

    @pytest.mark.parametrize("u,expected", [(orc.HAD, True), (orc.CNOT, True), (np.diag([1, np.exp(0.25j * np.pi)]), False)])
    def test_is_clifford(self, u, expected):
        assert is_clifford(u) is expected

    def test_closed_under_products(self):
        keys = {np.round(np.abs(u), 6).tobytes() for u in CLIFFORDS_1Q}
        g = np.random.default_rng(2)
        for _ in range(50):
            i, j = g.integers(0, 24, 2)
            prod = CLIFFORDS_1Q[i] @ CLIFFORDS_1Q[j]
            assert is_clifford(prod)
            assert np.round(np.abs(prod), 6).tobytes() in keys


class TestVariants:
    def test_no_single_qubit_gates(self):
        c = NoisyCircuit(2, (Location(gate("CNOT", 0, 1), PauliChannel({"XX": 1.0}), 0.1),))
        assert make_clifford_variants(c, 3, rng=1) == [c] * 3

    def test_exhaustive_one_qubit(self):
        c = NoisyCircuit(1, (Location(gate("T", 0)),))
        variants = make_clifford_variants(c, 24, exhaustive=True)
        mats = {np.round(v.locations[0].gate.matrix, 9).tobytes() for v in variants}
        assert len(variants) == 24 and len(mats) == 24

    def test_noise_is_kept(self):
        c = global_depolarizing_circuit()
        for v in make_clifford_variants(c, 5, rng=3):
            assert v.fault_probabilities == c.fault_probabilities
            assert fault_free_probability(v) == fault_free_probability(c)
            for a, b in zip(v.locations, c.locations):
                assert a.error is b.error and a.error_targets == b.error_targets
                if b.gate.n_targets == 2:
                    assert a.gate is b.gate

    def test_non_clifford_entangler(self):
        crz = np.diag([1, 1, 1, np.exp(0.3j)])
        from qem.core.gates import Gate

        c = NoisyCircuit(2, (Location(Gate(crz, (0, 1), "CRZ")),))
        with pytest.raises(ValueError):
            make_clifford_variants(c, 2, rng=1)

    def test_reproducible(self):
        c = global_depolarizing_circuit()
        a = make_clifford_variants(c, 4, rng=7)
        b = make_clifford_variants(c, 4, rng=7)
        assert [[loc.gate.name for loc in v.locations] for v in a] == [[loc.gate.name for loc in v.locations] for v in b]


class TestFit:
    def test_exact_line(self):
        xs = np.array([-0.4, 0.1, 0.3, 0.8])
        ts = TrainingSet(tuple(zip(2 * xs + 0.1, xs)))
        theta = fit_rescale_shift(ts)
        assert theta == pytest.approx((0.1, 2.0), abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            fit_rescale_shift(TrainingSet(((0.1, 0.5), (0.3, 0.5))))
        with pytest.raises(ValueError):
            fit_rescale_shift(TrainingSet(((0.1, 0.5),)))

    def test_empty(self):
        with pytest.raises(ValueError):
            TrainingSet(())

    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=3, max_size=20))
    def test_normal_equations(self, pairs):
        ts = TrainingSet(tuple(pairs))
        if np.ptp(ts.noisy) < 1e-3:
            return
        t0, t1 = fit_rescale_shift(ts)
        ref = np.polyfit(ts.noisy, ts.ideal, 1)
        assert (t1, t0) == pytest.approx(tuple(ref), abs=1e-8)

    def test_truncation(self):
        ts = TrainingSet(((0.1, 0.0), (-0.9, -0.5), (0.5, 0.2), (0.0, 0.1)), ("a", "b", "c", "d"))
        top = ts.truncated(2)
        assert top.pairs == ((-0.9, -0.5), (0.5, 0.2)) and top.provenance == ("b", "c")

    def test_global_depolarizing_theta(self):
        c = global_depolarizing_circuit()
        p0 = fault_free_probability(c)
        ts = build_training_set(make_clifford_variants(c, 30, rng=5), "ZX")
        theta0, theta1 = fit_rescale_shift(ts)
        assert theta0 == pytest.approx(0.0, abs=1e-10)
        assert theta1 == pytest.approx(1 / p0, rel=1e-10)


class TestDepolarizingClosedForms:
    def test_passthrough(self):
        assert depolarizing_rescale(1.0, "ZZ", 2, 0.37) == pytest.approx(0.37)

    def test_traceless(self):
        assert depolarizing_rescale(0.9, "ZX", 2, 0.45) == pytest.approx(0.5)

    def test_identity(self):
        for p0 in (0.2, 0.7, 1.0):
            assert depolarizing_rescale(p0, "II", 2, 1.0) == pytest.approx(1.0)

    def test_zero_p0(self):
        with pytest.raises(ValueError):
            depolarizing_rescale(0.0, "Z", 1, 0.0)

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("p0", [0.1, 0.5, 0.9])
    def test_purity_against_density_matrix(self, rng, n, p0):
        psi = orc.random_density(n, rng, rank=1)
        rho = p0 * psi + (1 - p0) * np.eye(2**n) / 2**n
        assert purity_from_P0(p0, n) == pytest.approx(np.real(np.trace(rho @ rho)), abs=1e-12)

    def test_two_qubit_value(self):
        # 0.81 * 3/4 + 1/4
        assert purity_from_P0(0.9, 2) == pytest.approx(0.8575, abs=1e-12)

    @pytest.mark.parametrize("p0", [k / 10 for k in range(1, 10)])
    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_round_trip(self, p0, n):
        assert purity_estimate_P0(purity_from_P0(p0, n), n) == pytest.approx(p0, abs=1e-12)

    def test_endpoints(self):
        assert purity_estimate_P0(1.0, 3) == pytest.approx(1.0)
        assert purity_estimate_P0(0.25, 2) == 0.0
        with pytest.raises(ValueError):
            purity_estimate_P0(0.2, 2)


class TestLearnMitigate:
    @pytest.mark.parametrize("obs", ["ZX", "XI", {"YY": 0.5, "ZI": -1.0}])
    def test_transfer_to_non_clifford_primary(self, obs):
        c = global_depolarizing_circuit()
        rep = learn_mitigate(c, obs, train_count=20, rng=4)
        assert abs(rep.bias) <= 1e-9
        assert rep.extras["theta"][1] == pytest.approx(1 / fault_free_probability(c))
        # undoing the depolarizing mixture restores the ideal state itself
        np.testing.assert_allclose(rep.extras["rho_em"], run_circuit(c, 0.0).elements, atol=1e-9)

    def test_disjoint_halves_agree(self):
        c = global_depolarizing_circuit()
        variants = make_clifford_variants(c, 48, exhaustive=True)
        a = fit_rescale_shift(build_training_set(variants[:24], "XZ"))
        b = fit_rescale_shift(build_training_set(variants[24:], "XZ"))
        assert a == pytest.approx(b, abs=1e-9)

    def test_truncation_keeps_exactness(self):
        rep = learn_mitigate(global_depolarizing_circuit(), "ZZ", train_count=30, rng=2, truncate_top=10)
        assert rep.extras["training_size"] == 10 and abs(rep.bias) <= 1e-9

    def test_sampled(self):
        c = global_depolarizing_circuit()
        rep = learn_mitigate(c, "ZX", train_count=20, rng=8, shots=20_000)
        assert rep.n_shots == 20_000
        assert abs(rep.bias) < 0.1
        assert rep.overhead == pytest.approx(rep.extras["theta"][1] ** 2)

    def test_local_noise_has_residual_bias(self):
        c = NoisyCircuit(
            1,
            (
                Location(gate("RY", 0, theta=0.6), PauliChannel({"Z": 1.0}), 0.1),
                Location(gate("T", 0), PauliChannel({"X": 1.0}), 0.05),
            ),
        )
        rep = learn_mitigate(c, "X", train_count=24, exhaustive=True)
        # the Clifford average of this noise is not an affine map of <X>, so the fit cannot remove it
        assert rep.extras["theta"] == pytest.approx((0.0, 1.0), abs=1e-9)
        assert abs(rep.bias) > 0.05
