"""Learning-based rescale-and-shift mitigation.

Training circuits replace every single-qubit gate of the primary circuit by
a random single-qubit Clifford and keep every fault untouched. Their ideal
and noisy values fit ``E0 = theta0 + theta1 E``, which is then applied to
the primary circuit's noisy value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core.circuit import NoisyCircuit, fault_free_probability, run_circuit
from .core.gates import H, S, Gate
from .core.paulis import PauliString, observable, pauli_decompose
from .core.rng import derive_seed
from .core.sampling import sample_shots
from .core.states import expectation
from .stats import EstimatorReport


def _canonical(u: np.ndarray) -> np.ndarray:
    lead = u.flat[np.flatnonzero(np.abs(u) > 1e-9)[0]]
    return u * (abs(lead) / lead)


def _key(u: np.ndarray) -> tuple:
    c = np.round(_canonical(u), 9)
    return tuple(np.concatenate([c.real.ravel(), c.imag.ravel()]) + 0.0)


def single_qubit_cliffords() -> tuple[np.ndarray, ...]:
    """The 24 single-qubit Cliffords modulo phase, generated from H and S."""
    seen = {_key(np.eye(2)): np.eye(2, dtype=complex)}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        nxt = []
        for u in frontier:
            for g in (H, S):
                v = _canonical(g @ u)
                k = _key(v)
                if k not in seen:
                    seen[k] = v
                    nxt.append(v)
        frontier = nxt
    return tuple(seen[k] for k in sorted(seen))


CLIFFORDS_1Q = single_qubit_cliffords()


def is_clifford(u: np.ndarray) -> bool:
    """``U P U^dag`` is a signed Pauli for every single-qubit X and Z generator."""
    k = u.shape[0].bit_length() - 1
    for q in range(k):
        for letter in "XZ":
            label = "I" * q + letter + "I" * (k - q - 1)
            conj = u @ PauliString.from_label(label).to_matrix() @ u.conj().T
            coeffs = pauli_decompose(conj, atol=1e-9)
            if len(coeffs) != 1 or abs(abs(next(iter(coeffs.values()))) - 1) > 1e-9:
                return False
    return True


def _check_entanglers(c: NoisyCircuit) -> list[int]:
    singles = []
    for k, loc in enumerate(c.locations):
        if loc.gate.n_targets == 1:
            singles.append(k)
        elif not is_clifford(loc.gate.matrix):
            raise ValueError(f"multi-qubit gate {loc.gate.name} at location {k} is not Clifford")
    return singles


def _variant(c: NoisyCircuit, singles: Sequence[int], choice: Sequence[int]) -> NoisyCircuit:
    locs = list(c.locations)
    for k, ci in zip(singles, choice):
        g = locs[k].gate
        locs[k] = replace(locs[k], gate=Gate(CLIFFORDS_1Q[ci], g.targets, f"C{ci}"))
    return c.with_locations(locs)


def make_clifford_variants(
    c: NoisyCircuit, count: int | None, rng=None, exhaustive: bool = False
) -> list[NoisyCircuit]:
    """Training circuits with every single-qubit gate swapped for a Clifford.

    ``exhaustive`` walks the Clifford assignments in lexicographic order
    (``count=None`` takes all ``24^k``); otherwise each gate is drawn
    uniformly and independently.
    """
    singles = _check_entanglers(c)
    if not singles:
        return [c] * (count or 1)
    if exhaustive:
        combos = itertools.product(range(len(CLIFFORDS_1Q)), repeat=len(singles))
        if count is not None:
            combos = itertools.islice(combos, count)
        return [_variant(c, singles, ch) for ch in combos]
    if count is None or count < 1:
        raise ValueError("random variants need a positive count")
    rng = np.random.default_rng(rng)
    picks = rng.integers(0, len(CLIFFORDS_1Q), size=(count, len(singles)))
    return [_variant(c, singles, row) for row in picks]


@dataclass(frozen=True)
class TrainingSet:
    pairs: tuple[tuple[float, float], ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("training set is empty")
        object.__setattr__(self, "pairs", tuple((float(a), float(b)) for a, b in self.pairs))

    @property
    def ideal(self) -> np.ndarray:
        return np.array([a for a, _ in self.pairs])

    @property
    def noisy(self) -> np.ndarray:
        return np.array([b for _, b in self.pairs])

    def truncated(self, top: int) -> "TrainingSet":
        """Keep the ``top`` pairs with the largest ``|E0|`` (stable order)."""
        order = sorted(range(len(self.pairs)), key=lambda i: -abs(self.pairs[i][0]))[:top]
        order.sort()
        prov = tuple(self.provenance[i] for i in order) if self.provenance else ()
        return TrainingSet(tuple(self.pairs[i] for i in order), prov)


def _describe(c: NoisyCircuit) -> str:
    return ",".join(loc.gate.name for loc in c.locations)


def build_training_set(
    variants: Sequence[NoisyCircuit], obs, shots: int = 0, rng=None, initial=None
) -> TrainingSet:
    """Ideal values at zero noise; noisy values exact or from ``shots`` shots."""
    obs = observable(obs)
    seed = derive_seed(rng) if shots else None
    pairs = []
    for k, v in enumerate(variants):
        e0 = expectation(run_circuit(v, 0.0, initial), obs)
        rho = run_circuit(v, 1.0, initial)
        e = expectation(rho, obs) if shots == 0 else float(np.mean(sample_shots(rho, obs, shots, seed, key=(k,))))
        pairs.append((e0, e))
    return TrainingSet(tuple(pairs), tuple(_describe(v) for v in variants))


def fit_rescale_shift(ts: TrainingSet) -> tuple[float, float]:
    """Least-squares ``(theta0, theta1)`` minimizing ``sum (E0 - theta0 - theta1 E)^2``."""
    x, y = ts.noisy, ts.ideal
    if x.size < 2:
        raise ValueError("need at least two training pairs")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-24 * max(1.0, float(np.sum(x**2))):
        raise ValueError("all noisy training values coincide; the fit is degenerate")
    theta1 = float(np.sum((x - xm) * (y - ym)) / sxx)
    theta0 = float(ym - theta1 * xm)
    return theta0, theta1


def depolarizing_rescale(p0: float, obs, n_qubits: int, noisy_value: float) -> float:
    """Undo ``rho = P0 rho0 + (1 - P0) I/2^N`` on an expectation value."""
    if not 0 < p0 <= 1:
        raise ValueError("P0 must lie in (0, 1]")
    tr = observable(obs).trace() if not isinstance(obs, (int, float)) else float(obs)
    return (noisy_value - (1 - p0) * tr / 2**n_qubits) / p0


def purity_from_P0(p0: float, n_qubits: int) -> float:
    """``Tr[rho^2]`` of ``P0 rho0 + (1 - P0) I/d`` for pure ``rho0``."""
    d = 2**n_qubits
    return p0 * p0 * (1 - 1 / d) + 1 / d


def purity_estimate_P0(purity: float, n_qubits: int) -> float:
    """Invert :func:`purity_from_P0` for ``P0`` in ``[0, 1]``."""
    d = 2**n_qubits
    if purity < 1 / d - 1e-12 or purity > 1 + 1e-12:
        raise ValueError(f"purity {purity} outside [1/2^N, 1]")
    return math.sqrt(max(0.0, (purity - 1 / d) / (1 - 1 / d)))


def learn_mitigate(
    c: NoisyCircuit,
    obs,
    train_count: int = 24,
    rng=None,
    shots: int = 0,
    truncate_top: int | None = None,
    exhaustive: bool = False,
    initial=None,
) -> EstimatorReport:
    """Fit on Clifford variants, then rescale and shift the primary value.

    ``shots = 0`` runs everything exactly and puts the affine image of the
    noisy state, ``theta1 rho + (1 - theta1) I/d``, in ``extras["rho_em"]``.
    """
    obs = observable(obs)
    seed = derive_seed(rng)
    variants = make_clifford_variants(c, train_count, seed, exhaustive=exhaustive)
    ts = build_training_set(variants, obs, shots, seed, initial)
    if truncate_top is not None:
        ts = ts.truncated(truncate_top)
    theta0, theta1 = fit_rescale_shift(ts)
    rho = run_circuit(c, 1.0, initial)
    reference = expectation(run_circuit(c, 0.0, initial), obs)
    extras = {"theta": (theta0, theta1), "training_size": len(ts.pairs), "P0": fault_free_probability(c)}
    if shots == 0:
        value = theta0 + theta1 * expectation(rho, obs)
        dim = rho.dim
        extras["rho_em"] = theta1 * rho.elements + (1 - theta1) * np.eye(dim) / dim
        return EstimatorReport(
            mean=value,
            variance=float("nan"),
            n_shots=0,
            reference=reference,
            method="learn",
            overhead=theta1**2,
            overhead_kind="predicted",
            extras=extras,
        )
    samples = theta0 + theta1 * sample_shots(rho, obs, shots, seed, key=(len(variants),))
    return EstimatorReport(
        mean=float(np.mean(samples)),
        variance=float(np.var(samples, ddof=1)),
        n_shots=shots,
        reference=reference,
        method="learn",
        overhead=theta1**2,
        overhead_kind="predicted",
        seed=seed,
        extras=extras,
    )


__all__ = [
    "CLIFFORDS_1Q",
    "TrainingSet",
    "build_training_set",
    "depolarizing_rescale",
    "fit_rescale_shift",
    "is_clifford",
    "learn_mitigate",
    "make_clifford_variants",
    "purity_estimate_P0",
    "purity_from_P0",
    "single_qubit_cliffords",
]
