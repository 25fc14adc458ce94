"""Probabilistic error cancellation.

Each noisy location ``U_p = (1 - p) U + p N U`` (with ``N`` free of any
identity component) is inverted by the rewrite

    U = U_p / (1 - p) - p / (1 - p) * N U,

whose basis operations are the noisy location itself and the location with
its fault forced. The alternative route inverts the whole location channel
over Pauli insertions placed after the noisy gate.

A circuit's quasiprobability mix is the product of its location mixes. It is
never materialized: every shot draws one basis term per location.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core.channels import PauliChannel, character_matrix, pauli_twirl, ptm
from .core.circuit import Location, NoisyCircuit, apply_location, circuit_fault_rate, initial_state, run_circuit
from .core.paulis import PauliString, observable, pauli_labels, pauli_matrix
from .core.rng import block_streams, derive_seed
from .core.sampling import sample_pauli_outcomes
from .core.states import apply_unitary, expectation
from .core.twirl import twirled_noise_circuit
from .stats import AliasTable, EstimatorReport

# Patterns enumerated in exact mode before refusing.
MAX_PATTERNS = 4096
# Registers up to this size are sampled by propagating Pauli vectors per shot.
PTM_ENGINE_MAX_QUBITS = 3


@dataclass(frozen=True)
class BasisOp:
    """Implementable operation at one location.

    ``kind`` is ``"noisy"`` (the location as is), ``"fault"`` (gate then the
    error part ``channel`` with certainty) or ``"pauli"`` (noisy location then
    the Pauli ``label`` on the error qubits).
    """

    kind: str
    channel: PauliChannel | None = None
    label: str | None = None

    def apply(self, rho: np.ndarray, loc: Location, n: int) -> np.ndarray:
        if self.kind == "noisy":
            return apply_location(rho, loc, n)
        if self.kind == "fault":
            rho = apply_unitary(rho, loc.gate.matrix, loc.gate.targets, n)
            return self.channel.apply(rho, loc.error_targets, n)
        if self.kind == "pauli":
            rho = apply_location(rho, loc, n)
            if set(self.label) == {"I"}:
                return rho
            return apply_unitary(rho, pauli_matrix(self.label), loc.error_targets, n)
        raise ValueError(f"unknown basis operation {self.kind!r}")

    def describe(self) -> str:
        return self.kind if self.label is None else f"{self.kind}[{self.label}]"


@dataclass(frozen=True)
class GateDecomposition:
    """Quasiprobability representation of one ideal location."""

    location: Location
    terms: tuple[tuple[float, BasisOp], ...]

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.terms])

    @property
    def gamma(self) -> float:
        return float(np.sum(np.abs(self.alphas)))

    def apply(self, rho: np.ndarray, n: int) -> np.ndarray:
        """Signed sum of the basis operations (a linear, non-positive map)."""
        return sum(a * op.apply(rho, self.location, n) for a, op in self.terms)

    def _local(self) -> tuple[Location, int]:
        support = self.location.qubits()
        remap = {q: i for i, q in enumerate(support)}
        loc = self.location
        local = Location(
            type(loc.gate)(loc.gate.matrix, tuple(remap[t] for t in loc.gate.targets), loc.gate.name),
            loc.error,
            loc.p,
            tuple(remap[t] for t in loc.error_targets),
        )
        return local, len(support)

    def transfer_matrix(self) -> np.ndarray:
        """``sum_n alpha_n T(B_n)`` on the location's qubits."""
        local, k = self._local()
        return sum(a * ptm(lambda r, op=op: op.apply(r, local, k), k) for a, op in self.terms)

    def ideal_transfer_matrix(self) -> np.ndarray:
        local, k = self._local()
        return ptm(lambda r: apply_unitary(r, local.gate.matrix, local.gate.targets, k), k)


def location_channel(loc: Location) -> PauliChannel:
    """The whole fault process ``(1 - p) id + p N`` as one Pauli channel."""
    if not loc.error.is_pauli:
        raise ValueError("location noise is not a Pauli channel; twirl it first")
    k = loc.error.n_qubits
    probs = {lab: loc.p * loc.error.prob(lab) for lab in pauli_labels(k)}
    probs["I" * k] += 1 - loc.p
    return PauliChannel(probs, name=f"location({loc.error.name})")


def invert_pauli_channel(ch: PauliChannel) -> dict[str, float]:
    """Quasiprobabilities ``q_P`` with ``sum_P q_P P ch(.) P`` equal to the identity map.

    The transfer matrix of a Pauli channel is diagonal with the Pauli
    fidelities ``f_b``; the inverse has fidelities ``1/f_b``, mapped back to
    quasiprobabilities by the character transform.
    """
    if not ch.is_pauli:
        raise ValueError("channel is not a stochastic Pauli channel")
    k = ch.n_qubits
    if k > 2:
        raise ValueError("Pauli channel inversion is limited to 2 qubits")
    labels = pauli_labels(k)
    char = character_matrix(k)
    f = char @ np.array([ch.prob(a) for a in labels])
    if np.any(np.abs(f) < 1e-12):
        raise ValueError("channel has a vanishing Pauli fidelity and cannot be inverted")
    q = char @ (1.0 / f) / 4**k
    return {lab: float(v) for lab, v in zip(labels, q) if abs(v) > 1e-15}


def inversion_gamma(ch: PauliChannel) -> float:
    return float(sum(abs(v) for v in invert_pauli_channel(ch).values()))


def decompose_inversion(loc: Location) -> GateDecomposition:
    """Noisy location followed by the sampled inverse of its channel."""
    if loc.p == 0:
        return GateDecomposition(loc, ((1.0, BasisOp("noisy")),))
    q = invert_pauli_channel(location_channel(loc))
    return GateDecomposition(loc, tuple((v, BasisOp("pauli", label=lab)) for lab, v in q.items()))


def decompose_noisy_gate(loc: Location, residual_fraction: float = 0.0, twirl: bool = False) -> GateDecomposition:
    """Rewrite decomposition of a noisy location.

    ``residual_fraction = r`` leaves the fault probability ``r p`` in place
    (partial cancellation); ``r = 0`` targets the ideal gate with
    ``gamma = (1 + p) / (1 - p)`` in canonical form.
    """
    if not 0 <= residual_fraction <= 1:
        raise ValueError("residual fraction must lie in [0, 1]")
    error = loc.error
    if not error.is_pauli:
        if not twirl:
            raise ValueError("location noise is not a Pauli channel; twirl it first")
        error = pauli_twirl(error)
        loc = Location(loc.gate, error, loc.p, loc.error_targets)
    fault, weight = error.without_identity()
    p = loc.p * weight
    if p == 0 or residual_fraction == 1:
        return GateDecomposition(loc, ((1.0, BasisOp("noisy")),))
    pr = residual_fraction * p
    a = (1 - pr) / (1 - p)
    b = (pr - p) / (1 - p)
    return GateDecomposition(loc, ((a, BasisOp("noisy")), (b, BasisOp("fault", channel=fault))))


def rewrite_gamma(p: float) -> float:
    """``(1 + p) / (1 - p)`` for a canonical fault probability ``p``."""
    return (1 + p) / (1 - p)


def decompose_circuit(
    c: NoisyCircuit, method: str = "rewrite", residual_fraction: float = 0.0
) -> list[GateDecomposition]:
    if method == "rewrite":
        return [decompose_noisy_gate(loc, residual_fraction) for loc in c.locations]
    if method == "inversion":
        if residual_fraction != 0:
            raise ValueError("partial cancellation uses the rewrite decomposition")
        return [decompose_inversion(loc) for loc in c.locations]
    raise ValueError(f"unknown decomposition method {method!r}")


def circuit_overhead(c: NoisyCircuit, method: str = "rewrite", residual_fraction: float = 0.0) -> float:
    """``prod_m gamma_m^2``."""
    return float(np.prod([d.gamma**2 for d in decompose_circuit(c, method, residual_fraction)]))


def pattern_count(decomps: Sequence[GateDecomposition]) -> int:
    return math.prod(len(d.terms) for d in decomps)


def quasi_state(decomps: Sequence[GateDecomposition], n: int, initial=None) -> np.ndarray:
    """Propagate the signed combination location by location (linearity)."""
    rho = initial_state(n) if initial is None else np.array(initial, dtype=complex)
    for d in decomps:
        rho = d.apply(rho, n)
    return rho


def enumerate_patterns(decomps: Sequence[GateDecomposition], n: int, obs, initial=None) -> float:
    """``sum over patterns of (prod alpha) Tr[O rho_pattern]`` by depth-first search."""
    obs = observable(obs)
    rho0 = initial_state(n) if initial is None else np.array(initial, dtype=complex)

    def walk(k: int, rho: np.ndarray, weight: float) -> float:
        if k == len(decomps):
            return weight * expectation(rho, obs)
        d = decomps[k]
        return sum(walk(k + 1, op.apply(rho, d.location, n), weight * a) for a, op in d.terms)

    return walk(0, rho0, 1.0)


def _term_expectations(rho: np.ndarray, terms) -> np.ndarray:
    return np.array([np.real(p.expectation(rho)) for _, p in terms])


class _PtmEngine:
    """Per-shot Pauli-vector propagation on registers of at most 3 qubits."""

    def __init__(self, decomps, n, obs_terms, initial):
        self.n = n
        labels = pauli_labels(n)
        self.index = {lab: i for i, lab in enumerate(labels)}
        self.mats = [
            np.stack([ptm(lambda r, op=op, d=d: op.apply(r, d.location, n), n) for _, op in d.terms])
            for d in decomps
        ]
        rho = initial_state(n) if initial is None else np.array(initial, dtype=complex)
        self.v0 = np.array([np.real(PauliString.from_label(lab).expectation(rho)) for lab in labels])
        self.cols = [self.index[p.letters] for _, p in obs_terms]

    def term_expectations(self, choices: np.ndarray) -> np.ndarray:
        """``choices[shot, location]`` -> ``<P_t>`` per shot and observable term."""
        v = np.broadcast_to(self.v0, (choices.shape[0], self.v0.size)).copy()
        for k, mats in enumerate(self.mats):
            col = choices[:, k]
            for j in range(mats.shape[0]):
                sel = col == j
                if np.any(sel):
                    v[sel] = v[sel] @ mats[j].T
        return v[:, self.cols]


class _PatternEngine:
    """Density-matrix simulation of each distinct pattern, cached."""

    def __init__(self, decomps, n, obs_terms, initial):
        self.decomps, self.n, self.obs_terms = decomps, n, obs_terms
        self.initial = initial_state(n) if initial is None else np.array(initial, dtype=complex)
        self.cache: dict[bytes, np.ndarray] = {}

    def _run(self, pattern: np.ndarray) -> np.ndarray:
        key = pattern.tobytes()
        if key not in self.cache:
            rho = self.initial
            for d, j in zip(self.decomps, pattern):
                rho = d.terms[j][1].apply(rho, d.location, self.n)
            self.cache[key] = _term_expectations(rho, self.obs_terms)
        return self.cache[key]

    def term_expectations(self, choices: np.ndarray) -> np.ndarray:
        uniq, inverse = np.unique(choices, axis=0, return_inverse=True)
        table = np.array([self._run(row) for row in uniq])
        return table[inverse.reshape(-1)]


def sample_pec(
    decomps: Sequence[GateDecomposition], n: int, obs, shots: int, rng, initial=None, key: tuple[int, ...] = ()
) -> np.ndarray:
    """Single-shot values ``gamma_tot * sign * outcome`` of the product mix."""
    obs = observable(obs)
    terms = obs.signed_terms()
    coeffs = np.array([c for c, _ in terms])
    tables = [AliasTable(np.abs(d.alphas)) for d in decomps]
    signs = [np.sign(d.alphas) for d in decomps]
    gamma_tot = float(np.prod([d.gamma for d in decomps]))
    engine_cls = _PtmEngine if n <= PTM_ENGINE_MAX_QUBITS else _PatternEngine
    engine = engine_cls(decomps, n, terms, initial)
    seed = derive_seed(rng)
    out = np.empty(shots)
    for start, size, g in block_streams(seed, key, shots):
        choices = np.empty((size, len(decomps)), dtype=np.int64)
        sign = np.ones(size)
        for k, (table, sg) in enumerate(zip(tables, signs)):
            choices[:, k] = table.sample(size, g)
            sign *= sg[choices[:, k]]
        ev = np.clip(engine.term_expectations(choices), -1.0, 1.0)
        outcomes = sample_pauli_outcomes((1 + ev) / 2, g)
        out[start : start + size] = gamma_tot * sign * (outcomes @ coeffs)
    return out


def raw_shot_variance(rho, obs) -> float:
    """Per-shot variance of term-wise Pauli sampling on ``rho``."""
    terms = observable(obs).signed_terms()
    ev = _term_expectations(np.asarray(rho), terms)
    return float(np.sum(np.array([c for c, _ in terms]) ** 2 * (1 - ev**2)))


def pec_mitigate(
    c: NoisyCircuit,
    obs,
    shots: int = 0,
    rng=None,
    mode: str = "sampled",
    method: str = "rewrite",
    residual_fraction: float = 0.0,
    twirl: bool = False,
    initial=None,
    max_patterns: int = MAX_PATTERNS,
) -> EstimatorReport:
    """Error-cancelled estimate of ``Tr[O rho0]``.

    Modes: ``"exact"`` enumerates every insertion pattern (refused beyond
    ``max_patterns``); ``"propagate"`` pushes the signed combination through
    the circuit as one linear map; ``"sampled"`` draws ``shots`` shots.
    Exact modes put the mitigated operator in ``extras["rho_em"]``.
    """
    obs = observable(obs)
    if twirl:
        c = twirled_noise_circuit(c)
    decomps = decompose_circuit(c, method, residual_fraction)
    n = c.n_qubits
    reference = expectation(run_circuit(c, 0.0, initial), obs)
    predicted = float(np.prod([d.gamma**2 for d in decomps]))
    name = "pec" if residual_fraction == 0 else "pec-partial"
    extras = {"predicted_overhead": predicted, "decomposition": method}
    if residual_fraction:
        extras["residual_value"] = expectation(run_circuit(c, residual_fraction, initial), obs)
    if mode in ("exact", "propagate"):
        rho_em = quasi_state(decomps, n, initial)
        extras["rho_em"] = rho_em
        if mode == "exact":
            count = pattern_count(decomps)
            if count > max_patterns:
                raise ValueError(f"{count} insertion patterns exceed the enumeration limit {max_patterns}")
            value = enumerate_patterns(decomps, n, obs, initial)
            extras["patterns"] = count
            extras["propagated_value"] = expectation(rho_em, obs) if _hermitian(rho_em) else None
        else:
            value = float(np.real(np.trace(obs.to_matrix() @ rho_em)))
        return EstimatorReport(
            mean=value,
            variance=float("nan"),
            n_shots=0,
            reference=reference,
            method=name,
            overhead=predicted,
            overhead_kind="predicted",
            extras=extras,
        )
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if shots < 2:
        raise ValueError("sampled mode needs at least two shots")
    seed = derive_seed(rng)
    samples = sample_pec(decomps, n, obs, shots, seed, initial)
    mean = float(np.mean(samples))
    var = float(np.var(samples, ddof=1))
    var_raw = raw_shot_variance(run_circuit(c, 1.0, initial).elements, obs)
    measured = var / var_raw if var_raw > 1e-15 else float("nan")
    extras["measured_overhead"] = measured
    return EstimatorReport(
        mean=mean,
        variance=var,
        n_shots=shots,
        reference=reference,
        method=name,
        overhead=measured if math.isfinite(measured) else predicted,
        overhead_kind="variance_ratio" if math.isfinite(measured) else "predicted",
        seed=seed,
        extras=extras,
    )


def _hermitian(rho: np.ndarray) -> bool:
    return bool(np.max(np.abs(rho - rho.conj().T)) < 1e-10)


def partial_pec(
    c: NoisyCircuit, lambda_target: float, obs, shots: int = 0, rng=None, mode: str = "sampled", **kwargs
) -> EstimatorReport:
    """Cancel noise down to the circuit fault rate ``lambda_target``.

    Every location keeps the same fraction ``lambda_target / lambda`` of its
    fault probability, so the estimate converges to the circuit run at that
    noise scale.
    """
    lam = circuit_fault_rate(c)
    if lambda_target < 0 or lambda_target > lam + 1e-15:
        raise ValueError(f"target fault rate {lambda_target} outside [0, {lam}]")
    r = 0.0 if lam == 0 else min(1.0, lambda_target / lam)
    return pec_mitigate(c, obs, shots, rng, mode=mode, residual_fraction=r, **kwargs)


__all__ = [
    "BasisOp",
    "GateDecomposition",
    "circuit_overhead",
    "decompose_circuit",
    "decompose_inversion",
    "decompose_noisy_gate",
    "enumerate_patterns",
    "invert_pauli_channel",
    "inversion_gamma",
    "location_channel",
    "partial_pec",
    "pec_mitigate",
    "quasi_state",
    "rewrite_gamma",
    "sample_pec",
]
