"""Dense density matrices and local operator application."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .paulis import Observable, PauliString, observable

MAX_QUBITS = 12
# Positivity is checked with a full eigensolve only up to this size.
PSD_CHECK_MAX_QUBITS = 8


def _n_from_dim(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def check_qubits(n: int) -> None:
    if n > MAX_QUBITS:
        raise ValueError(f"{n} qubits exceeds the dense-simulator cap of {MAX_QUBITS}")


def _apply_left(tensor: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    op_t = op.reshape((2,) * (2 * k))
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_unitary(rho: np.ndarray, u: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """``U rho U^dagger`` with ``U`` acting on ``targets``."""
    k = len(targets)
    if u.shape != (1 << k, 1 << k):
        raise ValueError(f"operator of shape {u.shape} does not act on {k} qubit(s)")
    if len(set(targets)) != k or any(not 0 <= t < n for t in targets):
        raise ValueError(f"invalid targets {tuple(targets)} for {n} qubit(s)")
    t = rho.reshape((2,) * (2 * n))
    t = _apply_left(t, u, targets)
    t = _apply_left(t, u.conj(), [n + q for q in targets])
    return t.reshape(rho.shape)


def apply_left(rho: np.ndarray, op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """``A rho`` with ``A`` acting on ``targets`` (no conjugate side)."""
    t = _apply_left(rho.reshape((2,) * (2 * n)), op, targets)
    return t.reshape(rho.shape)


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray], targets: Sequence[int], n: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for k in kraus:
        out += apply_unitary(rho, k, targets, n)
    return out


def partial_trace_replace(rho: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """``Tr_S[rho] (x) I/2^k`` on the support ``S`` (complete depolarization)."""
    targets = list(targets)
    others = [q for q in range(n) if q not in targets]
    dt, do = 1 << len(targets), 1 << len(others)
    order = others + targets + [n + q for q in others] + [n + q for q in targets]
    t = rho.reshape((2,) * (2 * n)).transpose(order).reshape(do, dt, do, dt)
    reduced = np.einsum("aibi->ab", t)
    full = np.einsum("ab,ij->aibj", reduced, np.eye(dt) / dt).reshape((2,) * (2 * n))
    return full.transpose(np.argsort(order)).reshape(rho.shape)


@dataclass(frozen=True)
class DensityMatrix:
    """Immutable ``2^n x 2^n`` positive, unit-trace operator."""

    elements: np.ndarray
    check: bool = True

    def __post_init__(self):
        arr = np.array(self.elements, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("density matrix must be square")
        n = _n_from_dim(arr.shape[0])
        check_qubits(n)
        if self.check:
            if np.max(np.abs(arr - arr.conj().T), initial=0.0) > 1e-12:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(arr) - 1) > 1e-12:
                raise ValueError(f"density matrix trace {np.trace(arr).real:.3g} != 1")
            if n <= PSD_CHECK_MAX_QUBITS and np.linalg.eigvalsh(arr)[0] < -1e-10:
                raise ValueError("density matrix has a negative eigenvalue")
        arr.setflags(write=False)
        object.__setattr__(self, "elements", arr)

    @property
    def n_qubits(self) -> int:
        return _n_from_dim(self.elements.shape[0])

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        check_qubits(n_qubits)
        rho = np.zeros((1 << n_qubits, 1 << n_qubits), dtype=complex)
        rho[0, 0] = 1
        return cls(rho)

    @classmethod
    def basis(cls, index: int, n_qubits: int) -> "DensityMatrix":
        rho = np.zeros((1 << n_qubits, 1 << n_qubits), dtype=complex)
        rho[index, index] = 1
        return cls(rho)

    @classmethod
    def from_statevector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 1 << n_qubits
        return cls(np.eye(dim, dtype=complex) / dim)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.elements, self.elements)))

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (descending, clipped at zero) and eigenvectors."""
        w, v = np.linalg.eigh(self.elements)
        w = np.clip(w, 0.0, None)
        return w[::-1], v[:, ::-1]

    def __array__(self, dtype=None, copy=None):
        return self.elements if dtype is None else self.elements.astype(dtype)


def as_array(state) -> np.ndarray:
    return state.elements if isinstance(state, DensityMatrix) else np.asarray(state, dtype=complex)


def expectation(state, obs) -> float:
    """``Tr[O rho]`` for a Pauli-sum observable (or a Hermitian matrix)."""
    rho = as_array(state)
    if isinstance(obs, np.ndarray):
        if obs.shape != rho.shape:
            raise ValueError("observable and state dimensions differ")
        if np.max(np.abs(obs - obs.conj().T)) > 1e-10:
            raise ValueError("observable matrix is not Hermitian")
        val = np.trace(obs @ rho)
    else:
        obs = observable(obs)
        if 1 << obs.n_qubits != rho.shape[0]:
            raise ValueError("observable and state act on different qubit counts")
        if not obs.is_hermitian:
            raise ValueError("observable is not Hermitian")
        val = sum(c * p.expectation(rho) for c, p in obs.terms)
    if abs(np.imag(val)) > 1e-10:
        raise ValueError(f"expectation has imaginary residue {np.imag(val):.3g}")
    return float(np.real(val))


def fidelity(rho0, sigma) -> float:
    """Uhlmann fidelity; reduces to ``Tr[rho0 sigma]`` for pure ``rho0``."""
    a, b = as_array(rho0), as_array(sigma)
    w, v = np.linalg.eigh(a)
    if w[-1] > 1 - 1e-10:
        psi = v[:, -1]
        return float(np.real(psi.conj() @ b @ psi))
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sq @ b @ sq
    ev = np.clip(np.linalg.eigvalsh((m + m.conj().T) / 2), 0, None)
    return float(np.sum(np.sqrt(ev)) ** 2)


def is_pure(state, atol: float = 1e-10) -> bool:
    rho = as_array(state)
    return abs(np.real(np.vdot(rho, rho)) - 1) < atol


__all__ = [
    "DensityMatrix",
    "MAX_QUBITS",
    "apply_kraus",
    "apply_left",
    "apply_unitary",
    "as_array",
    "expectation",
    "fidelity",
    "is_pure",
    "partial_trace_replace",
    "PauliString",
    "Observable",
]
