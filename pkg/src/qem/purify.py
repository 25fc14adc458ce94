"""Purification: virtual distillation, echo verification, McWeeny iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.paulis import matrix_of, observable
from .core.states import DensityMatrix, as_array

# Largest M * N for the explicit cyclic-shift oracle.
SWAP_CHECK_MAX_QUBITS = 12
# Up to this many qubits the oracle builds dense matrices.
SWAP_CHECK_DENSE_QUBITS = 8


class ConvergenceError(RuntimeError):
    """An iteration failed to reach its fixed point."""


@dataclass(frozen=True)
class PurifiedEstimate:
    value: float
    degree: int
    trace_rhoM: float
    overhead: float
    kind: str = "vd"


def _obs_matrix(obs, dim: int) -> np.ndarray:
    if isinstance(obs, np.ndarray):
        m = obs
    else:
        m = matrix_of(observable(obs))
    if m.shape != (dim, dim):
        raise ValueError("observable and state dimensions differ")
    return m


def matrix_power_hermitian(rho: np.ndarray, m: int) -> np.ndarray:
    out = np.linalg.matrix_power(rho, m)
    return (out + out.conj().T) / 2


def vd_expectation(rho, obs, m: int) -> PurifiedEstimate:
    """``Tr[O rho^M] / Tr[rho^M]`` with overhead ``Tr[rho^M]^{-2}``."""
    if m < 1:
        raise ValueError("degree M must be at least 1")
    r = as_array(rho)
    rm = matrix_power_hermitian(r, m)
    tr = float(np.real(np.trace(rm)))
    if tr <= 1e-14:
        raise ValueError("Tr[rho^M] vanishes")
    o = _obs_matrix(obs, r.shape[0])
    value = float(np.real(np.trace(o @ rm))) / tr
    return PurifiedEstimate(value, m, tr, tr**-2, "vd")


def vd_state(rho, m: int) -> DensityMatrix:
    rm = matrix_power_hermitian(as_array(rho), m)
    return DensityMatrix(rm / np.real(np.trace(rm)), check=False)


def cyclic_shift_permutation(n_qubits: int, copies: int) -> np.ndarray:
    """Index map of the copy-cyclic shift on ``copies`` registers of ``n_qubits``.

    Built as a product of transversal shifts, one per qubit position: qubit
    ``q`` of copy ``c`` moves to qubit ``q`` of copy ``c - 1``.
    """
    total = n_qubits * copies
    idx = np.arange(1 << total, dtype=np.int64)
    bits = (idx[:, None] >> (total - 1 - np.arange(total))) & 1
    perm = np.arange(total)
    for q in range(n_qubits):
        positions = [c * n_qubits + q for c in range(copies)]
        perm[positions] = np.roll(positions, -1)
    shifted = bits[:, perm]
    return shifted @ (1 << (total - 1 - np.arange(total)))


def vd_swap_check(rho, obs, m: int) -> float:
    """``Tr[S_M (O rho (x) rho (x) ... (x) rho)]`` with an explicit shift operator.

    Independent of :func:`vd_expectation`; both equal ``Tr[O rho^M]``.
    """
    r = as_array(rho)
    n = r.shape[0].bit_length() - 1
    if m < 1:
        raise ValueError("degree M must be at least 1")
    if m * n > SWAP_CHECK_MAX_QUBITS:
        raise ValueError(f"{m} copies of {n} qubits exceed the oracle limit of {SWAP_CHECK_MAX_QUBITS}")
    first = _obs_matrix(obs, r.shape[0]) @ r
    sigma = cyclic_shift_permutation(n, m)
    dim = sigma.size
    if m * n <= SWAP_CHECK_DENSE_QUBITS:
        shift = np.zeros((dim, dim))
        shift[sigma, np.arange(dim)] = 1.0
        big = first
        for _ in range(m - 1):
            big = np.kron(big, r)
        return float(np.real(np.trace(shift @ big)))
    # entry (j, sigma^-1 ...) of the product operator, gathered factor by factor
    mask = (1 << n) - 1
    rows = np.arange(dim)
    cols = np.empty(dim, dtype=np.int64)
    cols[sigma] = rows
    total = np.ones(dim, dtype=complex)
    for c in range(m):
        shift_bits = (m - 1 - c) * n
        a = (rows >> shift_bits) & mask
        b = (cols >> shift_bits) & mask
        total *= (first if c == 0 else r)[a, b]
    return float(np.real(total.sum()))


def echo_verification(rho, obs, rho_bar=None) -> PurifiedEstimate:
    """``Tr[O (rho_bar rho + rho rho_bar)] / (2 Tr[rho_bar rho])``.

    ``rho_bar`` defaults to ``rho``; the overhead is ``Tr[rho_bar rho]^{-1}``.
    """
    r = as_array(rho)
    rb = r if rho_bar is None else as_array(rho_bar)
    overlap = float(np.real(np.trace(rb @ r)))
    if overlap <= 1e-14:
        raise ValueError("echo overlap Tr[rho_bar rho] vanishes")
    o = _obs_matrix(obs, r.shape[0])
    value = float(np.real(np.trace(o @ (rb @ r + r @ rb)))) / (2 * overlap)
    return PurifiedEstimate(value, 2, overlap, 1 / overlap, "ev")


def echo_state(rho, rho_bar=None) -> DensityMatrix:
    r = as_array(rho)
    rb = r if rho_bar is None else as_array(rho_bar)
    sym = (rb @ r + r @ rb) / 2
    return DensityMatrix(sym / np.real(np.trace(sym)), check=False)


@dataclass(frozen=True)
class SpectrumDiagnostics:
    p1: float
    p2: float
    dominant: np.ndarray
    dominant_value: float | None


def spectrum_diagnostics(rho, obs=None) -> SpectrumDiagnostics:
    """Largest two eigenvalues and the dominant eigenvector (and ``<phi1|O|phi1>``)."""
    w, v = np.linalg.eigh(as_array(rho))
    w = np.clip(w, -1e-10, None)
    phi = v[:, -1]
    value = None
    if obs is not None:
        o = _obs_matrix(obs, phi.size)
        value = float(np.real(phi.conj() @ o @ phi))
    p2 = float(w[-2]) if w.size > 1 else 0.0
    return SpectrumDiagnostics(float(w[-1]), p2, phi, value)


def mcweeny(d, tol: float = 1e-12, max_iter: int = 100, full_output: bool = False):
    """Iterate ``D <- 3 D^2 - 2 D^3`` until ``||D^2 - D||_F < tol``.

    Eigenvalues above one half flow to 1 and those below to 0. An eigenvalue
    sitting at one half is a fixed point of the cubic and is reported as a
    convergence failure rather than silently kept.
    """
    m = np.array(d, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("McWeeny needs a square matrix")
    if np.max(np.abs(m - m.conj().T)) > 1e-10:
        raise ValueError("McWeeny needs a Hermitian matrix")
    ev = np.linalg.eigvalsh(m)
    if ev[0] < -0.1 or ev[-1] > 1.1:
        raise ValueError("eigenvalues outside the sanity window [-0.1, 1.1]")
    if np.any(np.abs(ev - 0.5) < 1e-12):
        raise ConvergenceError("an eigenvalue sits at 1/2, which the iteration cannot resolve")
    for it in range(max_iter + 1):
        sq = m @ m
        if np.linalg.norm(sq - m) < tol:
            out = m.real if np.all(np.abs(m.imag) == 0) else m
            return (out, it) if full_output else out
        if it == max_iter:
            break
        m = 3 * sq - 2 * sq @ m
        m = (m + m.conj().T) / 2
    raise ConvergenceError(f"no idempotent fixed point within {max_iter} iterations")


__all__ = [
    "ConvergenceError",
    "PurifiedEstimate",
    "SpectrumDiagnostics",
    "cyclic_shift_permutation",
    "echo_state",
    "echo_verification",
    "mcweeny",
    "spectrum_diagnostics",
    "vd_expectation",
    "vd_state",
    "vd_swap_check",
]
