"""Noisy circuits: ideal gates each followed by a stochastic fault.

A location applies its gate ``U`` and then ``rho -> (1 - p) rho + p N(rho)``,
where ``N`` is the normalized error part and ``p`` the fault probability.
Noise boosting rescales ``p`` only; the shape of ``N`` never changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .channels import Channel, identity
from .gates import Gate
from .states import DensityMatrix, apply_unitary, as_array, check_qubits


@dataclass(frozen=True)
class Location:
    """One gate plus its fault: ``error`` fires with probability ``p``.

    ``error_targets`` defaults to the gate's targets.
    """

    gate: Gate
    error: Channel | None = None
    p: float = 0.0
    error_targets: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0 <= self.p < 1:
            raise ValueError(f"fault probability {self.p} outside [0, 1)")
        targets = self.gate.targets if self.error_targets is None else tuple(self.error_targets)
        if self.error is None:
            object.__setattr__(self, "error", identity(len(targets)))
        if len(targets) != self.error.n_qubits:
            raise ValueError(
                f"error channel {self.error.name} acts on {self.error.n_qubits} qubit(s), targets {targets}"
            )
        object.__setattr__(self, "error_targets", targets)

    @property
    def is_noiseless(self) -> bool:
        return self.p == 0

    def qubits(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.gate.targets) | set(self.error_targets)))


@dataclass(frozen=True)
class NoisyCircuit:
    n_qubits: int
    locations: tuple[Location, ...] = ()

    def __post_init__(self):
        check_qubits(self.n_qubits)
        locs = tuple(self.locations)
        for loc in locs:
            if any(q >= self.n_qubits for q in loc.qubits()):
                raise ValueError(f"location on qubits {loc.qubits()} exceeds {self.n_qubits} qubit(s)")
        object.__setattr__(self, "locations", locs)

    def __len__(self) -> int:
        return len(self.locations)

    def __iter__(self):
        return iter(self.locations)

    @property
    def fault_probabilities(self) -> list[float]:
        return [loc.p for loc in self.locations]

    def with_locations(self, locations: Iterable[Location]) -> "NoisyCircuit":
        return NoisyCircuit(self.n_qubits, tuple(locations))

    def scaled(self, noise_scale: float) -> "NoisyCircuit":
        """Same circuit with every fault probability multiplied by ``noise_scale``."""
        _check_scale(self, noise_scale)
        return self.with_locations(replace(loc, p=loc.p * noise_scale) for loc in self.locations)

    def noiseless(self) -> "NoisyCircuit":
        return self.scaled(0.0)

    def max_p(self) -> float:
        return max(self.fault_probabilities, default=0.0)


def _check_scale(c: NoisyCircuit, noise_scale: float) -> None:
    if noise_scale < 0:
        raise ValueError("noise scale must be nonnegative")
    for k, loc in enumerate(c.locations):
        if noise_scale * loc.p >= 1:
            raise ValueError(
                f"location {k}: boosted fault probability {noise_scale * loc.p:g} is not below 1"
            )


def apply_location(rho: np.ndarray, loc: Location, n: int, p: float | None = None) -> np.ndarray:
    """Gate then fault with probability ``p`` (default ``loc.p``); ``p = 1`` forces the fault."""
    p = loc.p if p is None else p
    rho = apply_unitary(rho, loc.gate.matrix, loc.gate.targets, n)
    if p == 0:
        return rho
    faulty = loc.error.apply(rho, loc.error_targets, n)
    if p == 1:
        return faulty
    return (1 - p) * rho + p * faulty


def initial_state(n_qubits: int) -> np.ndarray:
    return as_array(DensityMatrix.zero(n_qubits)).copy()


def run_circuit(c: NoisyCircuit, noise_scale: float = 1.0, initial=None) -> DensityMatrix:
    """Final state with each fault probability rescaled to ``noise_scale * p_f``."""
    _check_scale(c, noise_scale)
    n = c.n_qubits
    rho = initial_state(n) if initial is None else as_array(initial).copy()
    for loc in c.locations:
        rho = apply_location(rho, loc, n, noise_scale * loc.p)
    return DensityMatrix(rho, check=False)


def ideal_state(c: NoisyCircuit, initial=None) -> DensityMatrix:
    return run_circuit(c, 0.0, initial)


def circuit_fault_rate(c: NoisyCircuit | Sequence[float]) -> float:
    """``lambda = sum_f p_f``."""
    ps = c.fault_probabilities if isinstance(c, NoisyCircuit) else c
    return float(math.fsum(ps))


def fault_free_probability(c: NoisyCircuit | Sequence[float]) -> float:
    """``P0 = prod_f (1 - p_f)``."""
    ps = c.fault_probabilities if isinstance(c, NoisyCircuit) else c
    return float(np.prod([1 - p for p in ps]))


def poisson_fault_rate(c: NoisyCircuit, noise_scale: float = 1.0) -> float:
    """``-ln P0`` at the given scale; equals ``lambda`` to first order."""
    _check_scale(c, noise_scale)
    return float(-math.fsum(math.log1p(-noise_scale * p) for p in c.fault_probabilities))


def uniform_circuit(gates: Sequence[Gate], n_qubits: int, error_factory, p: float) -> NoisyCircuit:
    """Every gate gets ``error_factory(k)`` on its own ``k`` targets with probability ``p``."""
    return NoisyCircuit(n_qubits, tuple(Location(g, error_factory(g.n_targets), p) for g in gates))
