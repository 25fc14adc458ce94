"""Pauli strings and Pauli-sum observables.

Bit convention: masks use the same bit order as computational-basis indices,
so qubit 0 is the most significant bit of an ``n``-qubit index. Label strings
are read left to right from qubit 0, e.g. ``"XZI"`` puts X on qubit 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

_PHASES = (1, 1j, -1, -1j)
_LETTERS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _popcount(a):
    return np.bitwise_count(a)


def _phase_index(phase) -> int:
    for k, ph in enumerate(_PHASES):
        if abs(complex(phase) - ph) < 1e-12:
            return k
    raise ValueError(f"Pauli phase must be one of +1, -1, +i, -i; got {phase!r}")


@dataclass(frozen=True)
class PauliString:
    """Signed Pauli operator ``phase * P_0 (x) P_1 (x) ... (x) P_{n-1}``.

    ``phase`` multiplies the tensor product of the letters I, X, Y, Z (with
    the usual Hermitian Y), so Hermitian strings carry phase +1 or -1.
    """

    n_qubits: int
    x_mask: int
    z_mask: int
    phase: complex = 1

    def __post_init__(self):
        if self.n_qubits < 0:
            raise ValueError("n_qubits must be nonnegative")
        limit = 1 << self.n_qubits
        if not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise ValueError("masks have bits beyond n_qubits")
        object.__setattr__(self, "phase", _PHASES[_phase_index(self.phase)])

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        sign = 1
        if label.startswith(("+", "-")):
            sign = -1 if label[0] == "-" else 1
            label = label[1:]
        n = len(label)
        x = z = 0
        for q, ch in enumerate(label.upper()):
            try:
                bx, bz = _LETTERS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}") from None
            bit = 1 << (n - 1 - q)
            x |= bit * bx
            z |= bit * bz
        return cls(n, x, z, sign)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits, 0, 0, 1)

    @property
    def letters(self) -> str:
        out = []
        for q in range(self.n_qubits):
            bit = 1 << (self.n_qubits - 1 - q)
            bx, bz = bool(self.x_mask & bit), bool(self.z_mask & bit)
            out.append("IZXY"[bx * 2 + bz])
        return "".join(out)

    @property
    def label(self) -> str:
        prefix = {1: "", -1: "-", 1j: "+i", -1j: "-i"}[self.phase]
        return prefix + self.letters

    @property
    def weight(self) -> int:
        return int(_popcount(np.uint64(self.x_mask | self.z_mask)))

    @property
    def is_hermitian(self) -> bool:
        return self.phase in (1, -1)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(self.letters) if ch != "I")

    def _row_phases(self) -> np.ndarray:
        """Per-column phase ``c_k`` with ``P|k> = c_k |k xor x>``."""
        idx = np.arange(1 << self.n_qubits, dtype=np.uint64)
        n_y = int(_popcount(np.uint64(self.x_mask & self.z_mask)))
        base = self.phase * (1j**n_y)
        signs = 1 - 2 * (_popcount(idx & np.uint64(self.z_mask)) & 1).astype(np.int64)
        return base * signs

    def to_matrix(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        cols = np.arange(dim)
        mat = np.zeros((dim, dim), dtype=complex)
        mat[cols ^ self.x_mask, cols] = self._row_phases()
        return mat

    def expectation(self, rho: np.ndarray) -> complex:
        """``Tr[P rho]`` in O(2^n) without forming ``P``."""
        cols = np.arange(1 << self.n_qubits)
        return complex(np.sum(self._row_phases() * rho[cols, cols ^ self.x_mask]))

    def __mul__(self, other: "PauliString") -> "PauliString":
        if not isinstance(other, PauliString):
            return NotImplemented
        if other.n_qubits != self.n_qubits:
            raise ValueError("Pauli strings act on different qubit counts")
        # X^a Z^b X^c Z^d = (-1)^{b.c} X^{a+c} Z^{b+d}; letters carry i^{#Y}.
        ny = lambda x, z: int(_popcount(np.uint64(x & z)))  # noqa: E731
        x = self.x_mask ^ other.x_mask
        z = self.z_mask ^ other.z_mask
        k = (
            _phase_index(self.phase)
            + _phase_index(other.phase)
            + ny(self.x_mask, self.z_mask)
            + ny(other.x_mask, other.z_mask)
            - ny(x, z)
            + 2 * int(_popcount(np.uint64(self.z_mask & other.x_mask)))
        )
        return PauliString(self.n_qubits, x, z, _PHASES[k % 4])

    def __neg__(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x_mask, self.z_mask, -self.phase)

    def commutes(self, other: "PauliString") -> bool:
        sym = _popcount(np.uint64(self.x_mask & other.z_mask)) + _popcount(
            np.uint64(self.z_mask & other.x_mask)
        )
        return int(sym) % 2 == 0

    def qubitwise_commutes(self, other: "PauliString") -> bool:
        for a, b in zip(self.letters, other.letters):
            if a != "I" and b != "I" and a != b:
                return False
        return True

    def __str__(self) -> str:
        return self.label


def pauli_labels(n_qubits: int) -> list[str]:
    """All ``4**n`` unsigned labels in lexicographic I < X < Y < Z order."""
    return ["".join(t) for t in itertools.product("IXYZ", repeat=n_qubits)]


def pauli_matrix(label: str) -> np.ndarray:
    return reduce(np.kron, (_SINGLE[ch] for ch in label.upper()), np.eye(1, dtype=complex))


def pauli_decompose(matrix: np.ndarray, atol: float = 1e-12) -> dict[str, complex]:
    """Coefficients ``c_P = Tr[P M] / 2^n`` of a square matrix."""
    dim = matrix.shape[0]
    n = dim.bit_length() - 1
    if 1 << n != dim or matrix.shape != (dim, dim):
        raise ValueError("matrix dimension is not a power of two")
    out = {}
    for lab in pauli_labels(n):
        c = PauliString.from_label(lab).expectation(matrix) / dim
        if abs(c) > atol:
            out[lab] = c
    return out


def as_pauli_string(p: "PauliString | str") -> PauliString:
    return PauliString.from_label(p) if isinstance(p, str) else p


@dataclass(frozen=True)
class Observable:
    """Real linear combination of Hermitian Pauli strings."""

    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("observable needs at least one term")
        if any(abs(np.imag(c)) > 0 for c, _ in self.terms):
            raise ValueError("observable coefficients must be real")
        terms = tuple((float(np.real(c)), as_pauli_string(p)) for c, p in self.terms)
        if len({p.n_qubits for _, p in terms}) != 1:
            raise ValueError("observable terms act on different qubit counts")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_dict(cls, spec: Mapping[str, float]) -> "Observable":
        return cls(tuple((c, PauliString.from_label(lab)) for lab, c in spec.items()))

    @classmethod
    def from_pauli(cls, p: "PauliString | str", coeff: float = 1.0) -> "Observable":
        return cls(((coeff, as_pauli_string(p)),))

    @property
    def n_qubits(self) -> int:
        return self.terms[0][1].n_qubits

    @property
    def is_hermitian(self) -> bool:
        return all(p.is_hermitian for _, p in self.terms)

    @property
    def is_single_term(self) -> bool:
        return len(self.terms) == 1

    def one_norm(self) -> float:
        return float(sum(abs(c) for c, _ in self.terms))

    def signed_terms(self) -> list[tuple[float, PauliString]]:
        """Terms with the Pauli phase folded into the (real) coefficient."""
        out = []
        for c, p in self.terms:
            if not p.is_hermitian:
                raise ValueError(f"non-Hermitian Pauli term {p.label}")
            out.append((c * p.phase.real, PauliString(p.n_qubits, p.x_mask, p.z_mask, 1)))
        return out

    def to_matrix(self) -> np.ndarray:
        return sum(c * p.to_matrix() for c, p in self.terms)

    def norm_inf(self) -> float:
        """Largest absolute eigenvalue."""
        if self.n_qubits <= 10:
            return float(np.max(np.abs(np.linalg.eigvalsh(self.to_matrix()))))
        return self.one_norm()

    def trace(self) -> float:
        dim = 1 << self.n_qubits
        return float(sum(c * p.phase.real * dim for c, p in self.terms if p.x_mask == 0 and p.z_mask == 0))

    def is_diagonal(self) -> bool:
        return all(p.x_mask == 0 for _, p in self.terms)

    def diagonal(self) -> np.ndarray:
        """Spectrum over computational basis states (diagonal observables only)."""
        if not self.is_diagonal():
            raise ValueError("observable is not diagonal in the computational basis")
        return np.real(np.diag(self.to_matrix())).copy()

    def __str__(self) -> str:
        return " + ".join(f"{c:g}*{p.label}" for c, p in self.terms)


def observable(spec: "Observable | Mapping[str, float] | str | PauliString") -> Observable:
    if isinstance(spec, Observable):
        return spec
    if isinstance(spec, (str, PauliString)):
        return Observable.from_pauli(spec)
    return Observable.from_dict(spec)


def matrix_of(op) -> np.ndarray:
    """Dense matrix of an Observable, PauliString, label or array."""
    if isinstance(op, np.ndarray):
        return op
    if isinstance(op, Observable):
        return op.to_matrix()
    return as_pauli_string(op).to_matrix()


def commuting(ops: Sequence[PauliString]) -> bool:
    return all(a.commutes(b) for a, b in itertools.combinations(ops, 2))


def iter_labels(labels: Iterable[str]) -> Iterable[PauliString]:
    return (PauliString.from_label(lab) for lab in labels)
