"""Ideal gates: a unitary matrix placed on target qubits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .states import DensityMatrix, apply_unitary, as_array

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])
SDG = S.conj()
T = np.diag([1, np.exp(1j * np.pi / 4)])
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


NAMED = {"I": I2, "X": X, "Y": Y, "Z": Z, "H": H, "S": S, "SDG": SDG, "T": T, "CNOT": CNOT, "CX": CNOT, "CZ": CZ, "SWAP": SWAP}
ROTATIONS = {"RX": rx, "RY": ry, "RZ": rz}


@dataclass(frozen=True)
class Gate:
    """Unitary ``matrix`` acting on ``targets`` (first target is the most significant)."""

    matrix: np.ndarray
    targets: tuple[int, ...]
    name: str = field(default="U")

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        targets = tuple(int(t) for t in self.targets)
        if m.shape != (1 << len(targets),) * 2:
            raise ValueError(f"gate {self.name}: matrix shape {m.shape} does not match targets {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"gate {self.name}: repeated target qubit")
        if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) > 1e-10:
            raise ValueError(f"gate {self.name} is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", targets)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def dagger(self) -> "Gate":
        return Gate(self.matrix.conj().T, self.targets, self.name + "^dag")


def gate(name: str, *targets: int, theta: float | None = None) -> Gate:
    """Named gate factory, e.g. ``gate("CNOT", 0, 1)`` or ``gate("RZ", 0, theta=0.3)``."""
    key = name.upper()
    if key in ROTATIONS:
        if theta is None:
            raise ValueError(f"{name} needs an angle")
        return Gate(ROTATIONS[key](theta), targets, f"{key}({theta:g})")
    if key not in NAMED:
        raise ValueError(f"unknown gate {name!r}")
    return Gate(NAMED[key], targets, key)


def apply_gate(state, g: Gate, n_qubits: int | None = None) -> DensityMatrix:
    """``U rho U^dagger``; returns a new :class:`DensityMatrix`."""
    rho = as_array(state)
    n = rho.shape[0].bit_length() - 1 if n_qubits is None else n_qubits
    if any(t >= n for t in g.targets):
        raise ValueError(f"gate {g.name} targets {g.targets} outside {n} qubit(s)")
    return DensityMatrix(apply_unitary(rho, g.matrix, g.targets, n), check=False)


def apply_channel(state, ch, targets: Sequence[int] | None = None) -> DensityMatrix:
    """``sum_k K rho K^dagger`` on ``targets`` (default: the leading qubits)."""
    rho = as_array(state)
    n = rho.shape[0].bit_length() - 1
    targets = tuple(range(ch.n_qubits)) if targets is None else tuple(targets)
    if any(t >= n for t in targets):
        raise ValueError(f"channel targets {targets} outside {n} qubit(s)")
    return DensityMatrix(ch.apply(rho, targets, n), check=False)
