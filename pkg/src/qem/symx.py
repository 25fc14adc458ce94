"""Symmetry verification and subspace expansion.

Expanded states are ``Gamma rho Gamma^dag`` with ``Gamma = sum_i w_i G_i``,
so expectations read ``Tr[Gamma^dag O Gamma rho] / Tr[Gamma^dag Gamma rho]``
and the projected matrices are ``H_ij = Tr[G_i^dag H G_j rho]``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core.circuit import NoisyCircuit, run_circuit
from .core.paulis import PauliString, as_pauli_string, matrix_of, observable
from .core.rng import block_streams, derive_seed
from .core.states import DensityMatrix, as_array, expectation
from .stats import EstimatorReport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SymmetrySpec:
    """Commuting Pauli symmetries and the eigenvalue each should take."""

    ops: tuple[PauliString, ...]
    eigenvalues: tuple[int, ...]

    def __post_init__(self):
        ops = tuple(as_pauli_string(s) for s in self.ops)
        eig = tuple(int(e) for e in self.eigenvalues)
        if not ops or len(ops) != len(eig):
            raise ValueError("need one eigenvalue per symmetry operator")
        if any(e not in (1, -1) for e in eig):
            raise ValueError("symmetry eigenvalues must be +1 or -1")
        if len({s.n_qubits for s in ops}) != 1:
            raise ValueError("symmetries act on different qubit counts")
        for s in ops:
            if not s.is_hermitian:
                raise ValueError(f"symmetry {s.label} is not Hermitian")
        for a, b in itertools.combinations(ops, 2):
            if not a.commutes(b):
                raise ValueError(f"symmetries {a.label} and {b.label} do not commute")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "eigenvalues", eig)

    @classmethod
    def of(cls, *labels: str, eigenvalues: Sequence[int] | None = None) -> "SymmetrySpec":
        eig = tuple(eigenvalues) if eigenvalues is not None else (1,) * len(labels)
        return cls(tuple(PauliString.from_label(lab) for lab in labels), eig)

    @property
    def n_qubits(self) -> int:
        return self.ops[0].n_qubits

    def signed_products(self) -> list[tuple[float, PauliString]]:
        """Expansion ``Pi = 2^{-k} sum_subsets (prod s_i) prod S_i``."""
        k = len(self.ops)
        out = []
        for mask in range(1 << k):
            p = PauliString.identity(self.n_qubits)
            sign = 1.0
            for i in range(k):
                if mask >> i & 1:
                    p = p * self.ops[i]
                    sign *= self.eigenvalues[i]
            out.append((sign * p.phase.real / 2**k, PauliString(p.n_qubits, p.x_mask, p.z_mask)))
        return out


def projector(sym: SymmetrySpec) -> np.ndarray:
    """``prod_i (1 + s_i S_i) / 2``."""
    dim = 1 << sym.n_qubits
    pi = np.eye(dim, dtype=complex)
    for s, e in zip(sym.ops, sym.eigenvalues):
        pi = pi @ (np.eye(dim) + e * s.to_matrix()) / 2
    return pi


def _proj(pi) -> np.ndarray:
    return projector(pi) if isinstance(pi, SymmetrySpec) else np.asarray(pi, dtype=complex)


def pass_rate(rho, pi) -> float:
    return float(np.real(np.trace(_proj(pi) @ as_array(rho))))


def postselect_state(rho, pi) -> tuple[DensityMatrix, float]:
    """``Pi rho Pi / Tr[Pi rho]`` and the pass rate ``Tr[Pi rho]``."""
    p = _proj(pi)
    r = as_array(rho)
    rate = pass_rate(r, p)
    if rate <= 1e-14:
        raise ValueError("state has no weight in the symmetry subspace")
    out = p @ r @ p / rate
    return DensityMatrix((out + out.conj().T) / 2, check=False), rate


def sv_postprocess(rho, pi, obs) -> float:
    """``Tr[Pi O Pi rho] / Tr[Pi rho]`` without forming the post-selected state."""
    p = _proj(pi)
    r = as_array(rho)
    rate = pass_rate(r, p)
    if rate <= 1e-14:
        raise ValueError("state has no weight in the symmetry subspace")
    o = matrix_of(observable(obs)) if not isinstance(obs, np.ndarray) else obs
    return float(np.real(np.trace(p @ o @ p @ r))) / rate


def sv_overheads(rate: float) -> tuple[float, float]:
    """Sampling overheads ``(1/rate, 1/rate^2)`` for post-selection and post-processing."""
    if not 0 < rate <= 1:
        raise ValueError("pass rate must lie in (0, 1]")
    return 1 / rate, 1 / rate**2


_BASIS_CHANGE = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / math.sqrt(2),
}


def _measurement_letters(paulis: Sequence[PauliString], n: int) -> str:
    letters = ["Z"] * n
    for p in paulis:
        for q, ch in enumerate(p.letters):
            if ch != "I":
                letters[q] = ch
    return "".join(letters)


def _basis_probabilities(rho: np.ndarray, letters: str) -> np.ndarray:
    u = np.eye(1, dtype=complex)
    for ch in letters:
        u = np.kron(u, _BASIS_CHANGE.get(ch, np.eye(2)))
    probs = np.clip(np.real(np.diag(u @ rho @ u.conj().T)), 0.0, None)
    return probs / probs.sum()


def _parity(outcomes: np.ndarray, p: PauliString) -> np.ndarray:
    mask = np.uint64(p.x_mask | p.z_mask)
    return 1.0 - 2.0 * (np.bitwise_count(outcomes.astype(np.uint64) & mask) & 1)


def sv_shot_mitigate(
    c: NoisyCircuit, sym: SymmetrySpec, obs, shots: int, rng=None, mode: str = "direct", initial=None
) -> EstimatorReport:
    """Shot-level symmetry verification.

    ``mode="direct"`` measures the observable and the symmetries in one
    qubit-wise basis and discards shots with the wrong symmetry outcome.
    ``mode="postprocess"`` estimates ``Tr[Pi O rho]`` and ``Tr[Pi rho]``
    from separate Pauli measurements and reports their ratio.
    """
    obs = observable(obs)
    rho = run_circuit(c, 1.0, initial).elements
    reference = expectation(run_circuit(c, 0.0, initial), obs)
    seed = derive_seed(rng)
    terms = obs.signed_terms()
    if mode == "direct":
        paulis = [p for _, p in terms] + list(sym.ops)
        for a, b in itertools.combinations(paulis, 2):
            if not a.qubitwise_commutes(b):
                raise ValueError(
                    f"{a.letters} and {b.letters} do not commute qubit-wise; use the postprocess mode"
                )
        letters = _measurement_letters(paulis, c.n_qubits)
        probs = _basis_probabilities(rho, letters)
        kept_vals = []
        for _, size, g in block_streams(seed, (), shots):
            out = g.choice(probs.size, size=size, p=probs)
            ok = np.ones(size, dtype=bool)
            for s, e in zip(sym.ops, sym.eigenvalues):
                ok &= _parity(out, s) * s.phase.real == e
            vals = sum(coef * _parity(out[ok], p) for coef, p in terms)
            kept_vals.append(np.broadcast_to(vals, (int(ok.sum()),)))
        kept = np.concatenate(kept_vals) if kept_vals else np.empty(0)
        if kept.size < 2:
            raise ValueError("fewer than two shots passed the symmetry check")
        retained = kept.size / shots
        return EstimatorReport(
            mean=float(np.mean(kept)),
            variance=float(np.var(kept, ddof=1)),
            n_shots=int(kept.size),
            reference=reference,
            method="sv-direct",
            overhead=1 / retained,
            overhead_kind="inverse_pass_rate",
            seed=seed,
            extras={"retained_fraction": retained, "total_shots": shots},
        )
    if mode != "postprocess":
        raise ValueError(f"unknown symmetry verification mode {mode!r}")
    products = sym.signed_products()
    num: dict[tuple[int, int], float] = {}
    den: dict[tuple[int, int], float] = {}
    strings: dict[tuple[int, int], PauliString] = {}
    for coef, p in terms:
        if any(not p.commutes(s) for s in sym.ops):
            continue
        for b, sp in products:
            q = p * sp
            key = (q.x_mask, q.z_mask)
            strings[key] = PauliString(q.n_qubits, q.x_mask, q.z_mask)
            num[key] = num.get(key, 0.0) + coef * b * q.phase.real
    for b, sp in products:
        key = (sp.x_mask, sp.z_mask)
        strings[key] = sp
        den[key] = den.get(key, 0.0) + b
    keys = sorted(strings)
    means, variances = {}, {}
    for j, key in enumerate(keys):
        p = strings[key]
        if key == (0, 0):
            means[key], variances[key] = 1.0, 0.0
            continue
        ev = float(np.real(p.expectation(rho)))
        total = 0.0
        sq = 0.0
        for _, size, g in block_streams(seed, (j,), shots):
            vals = np.where(g.random(size) < (1 + ev) / 2, 1.0, -1.0)
            total += vals.sum()
            sq += (vals**2).sum()
        mean = total / shots
        means[key] = mean
        variances[key] = (sq - shots * mean**2) / (shots - 1)
    n_val = sum(num.get(k, 0.0) * means[k] for k in keys)
    d_val = sum(den.get(k, 0.0) * means[k] for k in keys)
    if d_val <= 0:
        raise ValueError("estimated pass rate is not positive")
    grad = {k: num.get(k, 0.0) / d_val - den.get(k, 0.0) * n_val / d_val**2 for k in keys}
    est_var = sum(grad[k] ** 2 * variances[k] / shots for k in keys)
    settings = sum(1 for k in keys if k != (0, 0))
    total_shots = shots * settings
    return EstimatorReport(
        mean=n_val / d_val,
        variance=est_var * total_shots,
        n_shots=total_shots,
        reference=reference,
        method="sv-postprocess",
        overhead=1 / d_val**2,
        overhead_kind="inverse_pass_rate_squared",
        seed=seed,
        extras={"pass_rate": float(d_val), "settings": settings},
    )


@dataclass(frozen=True)
class ExpansionBasis:
    """Expansion operators ``G_i``; the first is the identity by convention."""

    ops: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        mats = tuple(np.array(matrix_of(o), dtype=complex) for o in self.ops)
        if not mats:
            raise ValueError("expansion basis is empty")
        dim = mats[0].shape[0]
        if any(m.shape != (dim, dim) for m in mats):
            raise ValueError("expansion operators have different shapes")
        gram = np.array([[np.trace(a.conj().T @ b) / dim for b in mats] for a in mats])
        if np.linalg.matrix_rank(gram, tol=1e-10) < len(mats):
            raise ValueError("expansion operators are linearly dependent")
        for m in mats:
            m.setflags(write=False)
        labels = self.labels or tuple(o if isinstance(o, str) else f"G{i}" for i, o in enumerate(self.ops))
        object.__setattr__(self, "ops", mats)
        object.__setattr__(self, "labels", tuple(labels))

    @classmethod
    def from_labels(cls, *labels: str) -> "ExpansionBasis":
        return cls(tuple(PauliString.from_label(lab).to_matrix() for lab in labels), tuple(labels))

    @classmethod
    def from_symmetry(cls, sym: SymmetrySpec) -> "ExpansionBasis":
        """``{I} + every product of the symmetry operators``."""
        prods = [p for _, p in sym.signed_products()]
        return cls(tuple(p.to_matrix() for p in prods), tuple(p.letters for p in prods))

    def __len__(self) -> int:
        return len(self.ops)


def build_subspace_matrices(rho, h, basis: ExpansionBasis) -> tuple[np.ndarray, np.ndarray]:
    """``H_ij = Tr[G_i^dag H G_j rho]`` and ``S_ij = Tr[G_i^dag G_j rho]``."""
    r = as_array(rho)
    hm = matrix_of(observable(h)) if not isinstance(h, np.ndarray) else h
    k = len(basis)
    hbar = np.empty((k, k), dtype=complex)
    sbar = np.empty((k, k), dtype=complex)
    for j, gj in enumerate(basis.ops):
        right = gj @ r
        for i, gi in enumerate(basis.ops):
            gid = gi.conj().T
            hbar[i, j] = np.trace(gid @ hm @ right)
            sbar[i, j] = np.trace(gid @ right)
    hbar = (hbar + hbar.conj().T) / 2
    sbar = (sbar + sbar.conj().T) / 2
    return hbar, sbar


def solve_gevp(hbar: np.ndarray, sbar: np.ndarray, threshold: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Ascending energies and ``S``-normalized weight columns of ``H w = E S w``.

    Directions with overlap eigenvalue below ``threshold * max`` are
    projected out first (canonical orthogonalization).
    """
    s_val, s_vec = np.linalg.eigh(sbar)
    if s_val[-1] <= 0:
        raise ValueError("overlap matrix has no positive direction")
    keep = s_val > threshold * s_val[-1]
    if not np.any(keep):
        raise ValueError("no direction survives the overlap threshold")
    x = s_vec[:, keep] / np.sqrt(s_val[keep])
    energies, u = np.linalg.eigh(x.conj().T @ hbar @ x)
    w = x @ u
    for j in range(w.shape[1]):
        lead = np.flatnonzero(np.abs(w[:, j]) > 1e-12)[0]
        w[:, j] *= abs(w[lead, j]) / w[lead, j]
    order = sorted(
        range(len(energies)),
        key=lambda j: (round(float(energies[j]), 10), *np.round(np.real(w[:, j]), 10), *np.round(np.imag(w[:, j]), 10)),
    )
    return energies[order], w[:, order]


def _gamma(basis: ExpansionBasis, weights: np.ndarray) -> np.ndarray:
    return sum(w * g for w, g in zip(weights, basis.ops))


def expanded_expectation(rho, obs, basis: ExpansionBasis, weights: np.ndarray) -> float:
    """``Tr[Gamma^dag O Gamma rho] / Tr[Gamma^dag Gamma rho]``."""
    r = as_array(rho)
    g = _gamma(basis, weights)
    o = matrix_of(observable(obs)) if not isinstance(obs, np.ndarray) else obs
    norm = np.real(np.trace(g.conj().T @ g @ r))
    if norm <= 1e-14:
        raise ValueError("expanded state has zero norm")
    return float(np.real(np.trace(g.conj().T @ o @ g @ r)) / norm)


def expanded_state(rho, basis: ExpansionBasis, weights: np.ndarray) -> DensityMatrix:
    r = as_array(rho)
    g = _gamma(basis, weights)
    out = g @ r @ g.conj().T
    tr = np.real(np.trace(out))
    if tr <= 1e-14:
        raise ValueError("expanded state has zero norm")
    out = out / tr
    return DensityMatrix((out + out.conj().T) / 2, check=False)


@dataclass(frozen=True)
class SubspaceResult:
    energy: float
    weights: np.ndarray
    energies: np.ndarray
    value: float | None
    below_ground: bool


def subspace_expand(rho, h, basis: ExpansionBasis, obs=None, threshold: float = 1e-10) -> SubspaceResult:
    """Lowest GEVP solution; ``value`` is ``obs`` on the expanded state.

    Mixed input states carry no variational guarantee, so an energy below
    the true ground energy is flagged (when the spectrum is affordable).
    """
    hbar, sbar = build_subspace_matrices(rho, h, basis)
    energies, weights = solve_gevp(hbar, sbar, threshold)
    w = weights[:, 0]
    value = None if obs is None else expanded_expectation(rho, obs, basis, w)
    below = False
    hobs = observable(h) if not isinstance(h, np.ndarray) else None
    if hobs is not None and hobs.n_qubits <= 10:
        ground = float(np.linalg.eigvalsh(hobs.to_matrix())[0])
        below = bool(energies[0] < ground - 1e-9)
        if below:
            log.warning("expanded energy %.6g lies below the ground energy %.6g", energies[0], ground)
    return SubspaceResult(float(energies[0]), w, energies, value, below)


__all__ = [
    "ExpansionBasis",
    "SubspaceResult",
    "SymmetrySpec",
    "build_subspace_matrices",
    "expanded_expectation",
    "expanded_state",
    "pass_rate",
    "postselect_state",
    "projector",
    "solve_gevp",
    "subspace_expand",
    "sv_overheads",
    "sv_postprocess",
    "sv_shot_mitigate",
]
