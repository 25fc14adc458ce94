"""Readout error mitigation.

Outcome vectors are indexed like computational basis states: qubit 0 is
the most significant bit, so bitstring ``"01"`` is index 1.
``A[x, y]`` is the probability of reading ``x`` after preparing ``y``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core.channels import Channel
from .core.paulis import PauliString
from .core.states import check_qubits

log = logging.getLogger(__name__)

FULL_MODE_MAX_QUBITS = 10
LEAKAGE_TOL = 1e-10
IBU_FLOOR = 1e-15


def _check_stochastic(m: np.ndarray, atol: float = 1e-10) -> None:
    if np.any(m < -atol) or np.any(m > 1 + atol):
        raise ValueError("assignment entries must lie in [0, 1]")
    if np.max(np.abs(m.sum(axis=0) - 1)) > atol:
        raise ValueError("assignment matrix columns must sum to 1")


@dataclass(frozen=True)
class AssignmentMatrix:
    """Column-stochastic readout matrix, stored in full or as per-qubit factors."""

    n_qubits: int
    matrix: np.ndarray | None = None
    factors: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        check_qubits(self.n_qubits)
        if (self.matrix is None) == (self.factors is None):
            raise ValueError("give exactly one of a full matrix or per-qubit factors")
        if self.matrix is not None:
            if self.n_qubits > FULL_MODE_MAX_QUBITS:
                raise ValueError(f"full assignment matrices are capped at {FULL_MODE_MAX_QUBITS} qubits")
            m = np.array(self.matrix, dtype=float)
            if m.shape != (1 << self.n_qubits,) * 2:
                raise ValueError("assignment matrix shape does not match n_qubits")
            _check_stochastic(m)
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
        else:
            fs = tuple(np.array(f, dtype=float) for f in self.factors)
            if len(fs) != self.n_qubits or any(f.shape != (2, 2) for f in fs):
                raise ValueError("tensor form needs one 2x2 factor per qubit")
            for f in fs:
                _check_stochastic(f)
                f.setflags(write=False)
            object.__setattr__(self, "factors", fs)

    @property
    def form(self) -> str:
        return "full" if self.matrix is not None else "tensor"

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @classmethod
    def identity(cls, n_qubits: int, form: str = "tensor") -> "AssignmentMatrix":
        if form == "full":
            return cls(n_qubits, matrix=np.eye(1 << n_qubits))
        return cls(n_qubits, factors=tuple(np.eye(2) for _ in range(n_qubits)))

    @classmethod
    def symmetric_flips(cls, flips: Sequence[float]) -> "AssignmentMatrix":
        return cls(len(flips), factors=tuple(np.array([[1 - q, q], [q, 1 - q]]) for q in flips))

    def to_full(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return reduce(np.kron, self.factors)

    def condition_number(self) -> float:
        if self.matrix is not None:
            return float(np.linalg.cond(self.matrix))
        return float(np.prod([np.linalg.cond(f) for f in self.factors]))

    def _tensor_apply(self, mats: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
        t = v.reshape((2,) * self.n_qubits)
        for q, m in enumerate(mats):
            t = np.moveaxis(np.tensordot(m, t, axes=([1], [q])), 0, q)
        return t.reshape(-1)

    def forward(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.matrix is not None:
            return self.matrix @ p
        return self._tensor_apply(self.factors, p)

    def transpose_forward(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.matrix is not None:
            return self.matrix.T @ v
        return self._tensor_apply([f.T for f in self.factors], v)

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        """``A^{-1} b`` (or ``A^{-T} b``) by linear solves, never an explicit inverse."""
        cond = self.condition_number()
        log.debug("assignment matrix condition number %.3g", cond)
        if not np.isfinite(cond) or cond > 1e12:
            raise ValueError(f"assignment matrix is singular (condition number {cond:.3g})")
        b = np.asarray(b, dtype=float)
        if self.matrix is not None:
            return np.linalg.solve(self.matrix.T if transpose else self.matrix, b)
        t = b.reshape((2,) * self.n_qubits)
        for q, f in enumerate(self.factors):
            m = f.T if transpose else f
            t = np.moveaxis(np.linalg.solve(m, np.moveaxis(t, q, 0).reshape(2, -1)).reshape(t.shape), 0, q)
        return t.reshape(-1)

    def to_json(self) -> dict:
        if self.matrix is not None:
            return {"n_qubits": self.n_qubits, "form": "full", "matrix": self.matrix.tolist()}
        return {"n_qubits": self.n_qubits, "form": "tensor", "factors": [f.tolist() for f in self.factors]}

    @classmethod
    def from_json(cls, doc: Mapping) -> "AssignmentMatrix":
        n = int(doc["n_qubits"])
        if doc.get("form", "full") == "full":
            return cls(n, matrix=np.array(doc["matrix"], dtype=float))
        return cls(n, factors=tuple(np.array(f, dtype=float) for f in doc["factors"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AssignmentMatrix":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ReadoutDistribution:
    """Outcome probabilities; ``quasi`` marks inverted vectors that may go negative."""

    probs: np.ndarray
    quasi: bool = False

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        n = p.size.bit_length() - 1
        if p.ndim != 1 or 1 << n != p.size:
            raise ValueError("distribution length must be a power of two")
        if not self.quasi:
            if np.any(p < -1e-12):
                raise ValueError("negative probability in a raw distribution")
            if abs(p.sum() - 1) > 1e-8:
                raise ValueError("probabilities must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_qubits(self) -> int:
        return self.probs.size.bit_length() - 1

    @classmethod
    def from_counts(cls, counts: Mapping[str, float]) -> "ReadoutDistribution":
        n = len(next(iter(counts)))
        p = np.zeros(1 << n)
        for bits, c in counts.items():
            p[int(bits, 2)] += c
        return cls(p / p.sum())

    def to_dict(self) -> dict[str, float]:
        n = self.n_qubits
        return {format(i, f"0{n}b"): float(v) for i, v in enumerate(self.probs) if v != 0}

    def expectation(self, spectrum) -> float:
        return float(np.dot(_spectrum(spectrum, self.n_qubits), self.probs))


def _spectrum(spec, n: int) -> np.ndarray:
    if isinstance(spec, Mapping):
        out = np.zeros(1 << n)
        for bits, v in spec.items():
            out[int(bits, 2)] = v
        return out
    return np.asarray(spec, dtype=float)


def _as_probs(p) -> np.ndarray:
    return p.probs if isinstance(p, ReadoutDistribution) else np.asarray(p, dtype=float)


def _diagonal_output(ch: Channel, rho: np.ndarray) -> np.ndarray:
    out = ch(rho)
    off = out - np.diag(np.diag(out))
    if np.max(np.abs(off), initial=0.0) > LEAKAGE_TOL:
        raise ValueError("measurement channel leaks out of the computational basis")
    return np.real(np.diag(out))


def calibrate(meas_channel: Channel, mode: str = "full") -> AssignmentMatrix:
    """Prepare each basis state, apply the readout channel and read the diagonal.

    Tensor mode prepares each qubit in 0 and 1 with the others in 0 and keeps
    that qubit's marginal, so correlations are dropped by construction.
    """
    n = meas_channel.n_qubits
    dim = 1 << n
    if mode == "full":
        if n > FULL_MODE_MAX_QUBITS:
            raise ValueError(f"full calibration is capped at {FULL_MODE_MAX_QUBITS} qubits")
        cols = []
        for y in range(dim):
            rho = np.zeros((dim, dim), dtype=complex)
            rho[y, y] = 1
            cols.append(_diagonal_output(meas_channel, rho))
        return AssignmentMatrix(n, matrix=np.array(cols).T)
    if mode == "tensor":
        factors = []
        for q in range(n):
            f = np.empty((2, 2))
            for b in (0, 1):
                y = b << (n - 1 - q)
                rho = np.zeros((dim, dim), dtype=complex)
                rho[y, y] = 1
                diag = _diagonal_output(meas_channel, rho).reshape((2,) * n)
                f[:, b] = np.moveaxis(diag, q, 0).reshape(2, -1).sum(axis=1)
            factors.append(f)
        return AssignmentMatrix(n, factors=tuple(factors))
    raise ValueError(f"unknown calibration mode {mode!r}")


def invert(a: AssignmentMatrix, p_noisy) -> ReadoutDistribution:
    """``A^{-1} p_noisy``; entries may be negative, hence tagged quasi."""
    return ReadoutDistribution(a.solve(_as_probs(p_noisy)), quasi=True)


def mitigated_expectation(a: AssignmentMatrix, spectrum, p_noisy) -> float:
    """``O^T A^{-1} p_noisy`` via one transposed solve ``A^T y = O``."""
    o = _spectrum(spectrum, a.n_qubits)
    return float(np.dot(a.solve(o, transpose=True), _as_probs(p_noisy)))


def ibu(a: AssignmentMatrix, p_noisy, iterations: int = 100, tol: float = 1e-10) -> ReadoutDistribution:
    """Iterative Bayesian unfolding from the uniform prior.

    Stops after ``iterations`` updates or once the L1 change drops below ``tol``.
    """
    p_obs = _as_probs(p_noisy)
    if np.any(p_obs < 0):
        raise ValueError("IBU needs a nonnegative observed distribution")
    p = np.full(a.dim, 1.0 / a.dim)
    for _ in range(iterations):
        ratio = p_obs / np.maximum(a.forward(p), IBU_FLOOR)
        new = p * a.transpose_forward(ratio)
        new /= new.sum()
        done = np.sum(np.abs(new - p)) < tol
        p = new
        if done:
            break
    return ReadoutDistribution(p)


def z_string_label(n: int, support: Sequence[int]) -> str:
    return "".join("Z" if q in support else "I" for q in range(n))


def twirl_factor(meas_channel: Channel, z_label: str) -> float:
    """``D_x = Tr[Z^x E(Z^x)] / 2^N``; bit-flip twirling leaves it unchanged."""
    p = PauliString.from_label(z_label)
    if p.x_mask:
        raise ValueError("twirl factors are defined for Z-type strings")
    dim = 1 << p.n_qubits
    return float(np.real(p.expectation(meas_channel(p.to_matrix())))) / dim


def bitflip_twirl(meas_channel: Channel) -> Channel:
    """Average of ``X^s E(X^s . X^s) X^s`` over all ``s in {0,1}^N``."""
    n = meas_channel.n_qubits
    ops = []
    for s in range(1 << n):
        xs = PauliString(n, s, 0).to_matrix()
        ops.extend(xs @ k @ xs / np.sqrt(1 << n) for k in meas_channel.kraus)
    return Channel(ops, name=f"bitflip_twirl({meas_channel.name})")


def z_transfer_matrix(meas_channel: Channel) -> np.ndarray:
    """``T[x, y] = Tr[Z^x E(Z^y)] / 2^N`` over Z-type strings."""
    n = meas_channel.n_qubits
    dim = 1 << n
    zs = [PauliString(n, 0, z) for z in range(dim)]
    return np.array(
        [[np.real(zx.expectation(meas_channel(zy.to_matrix()))) / dim for zy in zs] for zx in zs]
    )


def twirled_rescale(factors: Mapping[str, float], noisy_values: Mapping[str, float]) -> dict[str, float]:
    """Divide each twirled noisy value by its factor ``D_x``."""
    out = {}
    for key, value in noisy_values.items():
        d = factors[key]
        if abs(d) < 1e-6:
            raise ValueError(f"readout factor for {key} vanishes; value is unrecoverable")
        out[key] = value / d
    return out


def readout_distribution(rho, meas_channel: Channel | None = None) -> ReadoutDistribution:
    """Computational-basis outcome probabilities, optionally through a readout channel."""
    r = np.asarray(rho)
    if meas_channel is not None:
        r = meas_channel(r)
    p = np.clip(np.real(np.diag(r)), 0.0, None)
    return ReadoutDistribution(p / p.sum())


def sample_distribution(p, shots: int, rng: np.random.Generator) -> ReadoutDistribution:
    counts = rng.multinomial(shots, _as_probs(p) / _as_probs(p).sum())
    return ReadoutDistribution(counts / shots)


__all__ = [
    "AssignmentMatrix",
    "ReadoutDistribution",
    "bitflip_twirl",
    "calibrate",
    "ibu",
    "invert",
    "mitigated_expectation",
    "readout_distribution",
    "sample_distribution",
    "twirl_factor",
    "twirled_rescale",
    "z_string_label",
    "z_transfer_matrix",
]
