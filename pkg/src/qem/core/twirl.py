"""Pauli twirling of circuit noise.

A random Pauli ``G`` placed before a Clifford gate ``C`` and ``C G C^dag``
placed after its fault leaves the ideal circuit unchanged while averaging the
fault over the Pauli group. The average over all frames equals the circuit
whose error channels are replaced by their Pauli twirls.
"""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np

from .channels import pauli_twirl
from .circuit import Location, NoisyCircuit
from .gates import Gate
from .paulis import pauli_decompose, pauli_labels, pauli_matrix
from .states import _apply_left


def twirled_noise_circuit(c: NoisyCircuit) -> NoisyCircuit:
    """Replace every error channel by its Pauli twirl."""
    return c.with_locations(replace(loc, error=pauli_twirl(loc.error)) for loc in c.locations)


def _embed(loc: Location) -> tuple[tuple[int, ...], np.ndarray]:
    """Gate unitary expressed on the union of gate and error qubits."""
    support = loc.qubits()
    k = len(support)
    local = [support.index(t) for t in loc.gate.targets]
    eye = np.eye(1 << k, dtype=complex).reshape((2,) * (2 * k))
    return support, _apply_left(eye, loc.gate.matrix, local).reshape(1 << k, 1 << k)


def conjugated_frame(loc: Location, label: str) -> tuple[tuple[int, ...], np.ndarray]:
    """``C G C^dag`` for the frame Pauli ``label`` on the location's support.

    Raises if the result is not a Pauli (non-Clifford gate).
    """
    support, u = _embed(loc)
    g = pauli_matrix(label)
    after = u @ g @ u.conj().T
    coeffs = pauli_decompose(after)
    if len(coeffs) != 1:
        raise ValueError(f"gate {loc.gate.name} is not Clifford; cannot propagate the Pauli frame")
    return support, after


def frame_variant(c: NoisyCircuit, labels) -> NoisyCircuit:
    """Circuit with frame Pauli ``labels[k]`` around location ``k``."""
    locs = []
    for loc, label in zip(c.locations, labels, strict=True):
        support, after = conjugated_frame(loc, label)
        before = Gate(pauli_matrix(label), support, f"frame[{label}]")
        locs.append(Location(before))
        locs.append(loc)
        locs.append(Location(Gate(after, support, f"frame'[{label}]")))
    return c.with_locations(locs)


def random_frame_variant(c: NoisyCircuit, rng: np.random.Generator) -> NoisyCircuit:
    labels = []
    for loc in c.locations:
        k = len(loc.qubits())
        letters = rng.integers(0, 4, size=k)
        labels.append("".join("IXYZ"[i] for i in letters))
    return frame_variant(c, labels)


def all_frame_variants(c: NoisyCircuit):
    """Every frame assignment (``4^{sum k}`` circuits); for small tests only."""
    per_loc = [pauli_labels(len(loc.qubits())) for loc in c.locations]
    for labels in itertools.product(*per_loc):
        yield frame_variant(c, labels)


__all__ = [
    "all_frame_variants",
    "conjugated_frame",
    "frame_variant",
    "random_frame_variant",
    "twirled_noise_circuit",
]
