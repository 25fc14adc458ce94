"""Quantum channels on a few qubits: Kraus form, stochastic Pauli form, twirling.

Depolarizing convention used throughout: ``depolarizing(p, k)`` is
``rho -> (1 - p) rho + p I/2^k`` on its ``k``-qubit support, so on one qubit
``<Z>`` of ``|0><0|`` becomes ``1 - p``. In stochastic-Pauli language this is
identity with probability ``1 - 3p/4`` and each of X, Y, Z with ``p/4``.
"""

from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np

from .paulis import PauliString, pauli_labels, pauli_matrix
from .states import apply_kraus, partial_trace_replace

# Transfer matrices are only formed on small supports.
MAX_PTM_QUBITS = 3


class Channel:
    """CPTP map on ``n_qubits`` given by Kraus operators."""

    def __init__(self, kraus: Sequence[np.ndarray], name: str = "channel", atol: float = 1e-10):
        ops = tuple(np.array(k, dtype=complex) for k in kraus)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        n = dim.bit_length() - 1
        if 1 << n != dim or any(k.shape != (dim, dim) for k in ops):
            raise ValueError("Kraus operators must be square with a power-of-two dimension")
        completeness = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(completeness - np.eye(dim))) > atol:
            raise ValueError("incomplete Kraus set: sum K^dag K != I")
        for k in ops:
            k.setflags(write=False)
        self._kraus = ops
        self.n_qubits = n
        self.name = name

    @property
    def kraus(self) -> tuple[np.ndarray, ...]:
        return self._kraus

    @property
    def is_pauli(self) -> bool:
        return False

    def apply(self, rho: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
        if len(targets) != self.n_qubits:
            raise ValueError(f"{self.name} acts on {self.n_qubits} qubit(s), got targets {tuple(targets)}")
        return apply_kraus(rho, self.kraus, targets, n)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return self.apply(np.asarray(rho, dtype=complex), tuple(range(self.n_qubits)), self.n_qubits)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, n_qubits={self.n_qubits})"


class PauliChannel(Channel):
    """Stochastic Pauli channel ``rho -> sum_P p_P P rho P``."""

    def __init__(self, probs: Mapping[str, float], name: str = "pauli", atol: float = 1e-10):
        probs = {k.upper(): float(v) for k, v in probs.items() if v != 0}
        if not probs:
            raise ValueError("Pauli channel needs a nonzero probability")
        lengths = {len(k) for k in probs}
        if len(lengths) != 1:
            raise ValueError("Pauli labels have different lengths")
        if any(v < -atol for v in probs.values()):
            raise ValueError("Pauli probabilities must be nonnegative")
        if abs(sum(probs.values()) - 1) > atol:
            raise ValueError("Pauli probabilities must sum to 1")
        self._probs = dict(sorted(probs.items()))
        self.n_qubits = lengths.pop()
        self.name = name
        self._kraus = None

    @property
    def probs(self) -> dict[str, float]:
        return dict(self._probs)

    @property
    def kraus(self) -> tuple[np.ndarray, ...]:
        if self._kraus is None:
            self._kraus = tuple(np.sqrt(max(p, 0.0)) * pauli_matrix(lab) for lab, p in self._probs.items())
        return self._kraus

    @property
    def is_pauli(self) -> bool:
        return True

    def prob(self, label: str) -> float:
        return self._probs.get(label.upper(), 0.0)

    def identity_weight(self) -> float:
        return self.prob("I" * self.n_qubits)

    def fidelities(self) -> dict[str, float]:
        """Diagonal of the Pauli transfer matrix, ``f_b = sum_a p_a s(a, b)``."""
        labels = pauli_labels(self.n_qubits)
        p = np.array([self.prob(a) for a in labels])
        return dict(zip(labels, character_matrix(self.n_qubits) @ p))

    def without_identity(self) -> tuple["PauliChannel | None", float]:
        """Normalized non-identity part and its weight."""
        w = 1.0 - self.identity_weight()
        if w <= 1e-15:
            return None, 0.0
        ident = "I" * self.n_qubits
        return PauliChannel({k: v / w for k, v in self._probs.items() if k != ident}, name=self.name), w


class CompleteDepolarizing(PauliChannel):
    """``rho -> Tr_S[rho] (x) I/2^k``; the uniform Pauli channel, applied by partial trace."""

    def __init__(self, n_qubits: int):
        labels = pauli_labels(n_qubits) if n_qubits <= 4 else None
        self.n_qubits = n_qubits
        self.name = f"complete_depolarizing[{n_qubits}]"
        self._kraus = None
        self._probs = {lab: 1.0 / 4**n_qubits for lab in labels} if labels else None

    @property
    def probs(self) -> dict[str, float]:
        if self._probs is None:
            raise ValueError("probability table not materialized beyond 4 qubits")
        return dict(self._probs)

    def prob(self, label: str) -> float:
        return 1.0 / 4**self.n_qubits

    def fidelities(self) -> dict[str, float]:
        labels = pauli_labels(self.n_qubits)
        return {lab: 1.0 if i == 0 else 0.0 for i, lab in enumerate(labels)}

    def apply(self, rho: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
        if len(targets) != self.n_qubits:
            raise ValueError(f"{self.name} acts on {self.n_qubits} qubit(s), got targets {tuple(targets)}")
        return partial_trace_replace(rho, targets, n)

    def without_identity(self):
        if self.n_qubits > 4:
            raise ValueError("canonical fault form not available beyond 4 qubits")
        return PauliChannel.without_identity(self)


def character_matrix(n_qubits: int) -> np.ndarray:
    """``S[b, a] = +1`` if Paulis ``a`` and ``b`` commute, else ``-1``; ``S @ S = 4^n I``."""
    ps = [PauliString.from_label(lab) for lab in pauli_labels(n_qubits)]
    return np.array([[1.0 if b.commutes(a) else -1.0 for a in ps] for b in ps])


def identity(n_qubits: int = 1) -> PauliChannel:
    return PauliChannel({"I" * n_qubits: 1.0}, name="identity")


def depolarizing(p: float, n_qubits: int = 1) -> PauliChannel:
    """``(1 - p) rho + p I/2^k`` as a stochastic Pauli channel."""
    _check_prob(p)
    labels = pauli_labels(n_qubits)
    share = p / 4**n_qubits
    probs = {lab: share for lab in labels}
    probs[labels[0]] += 1 - p
    return PauliChannel(probs, name=f"depolarizing({p:g})")


def dephasing(p: float) -> PauliChannel:
    _check_prob(p)
    return PauliChannel({"I": 1 - p, "Z": p}, name=f"dephasing({p:g})")


def bit_flip(p: float) -> PauliChannel:
    _check_prob(p)
    return PauliChannel({"I": 1 - p, "X": p}, name=f"bit_flip({p:g})")


def pauli_channel(probs: Mapping[str, float]) -> PauliChannel:
    return PauliChannel(probs)


def coherent_z_rotation(theta: float) -> Channel:
    """Unitary error ``exp(-i theta Z)``; its Pauli twirl dephases with ``sin^2(theta)``."""
    u = np.diag([np.exp(-1j * theta), np.exp(1j * theta)])
    return Channel([u], name=f"zrot({theta:g})")


def amplitude_damping(gamma: float) -> Channel:
    _check_prob(gamma)
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]])
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]])
    return Channel([k0, k1], name=f"amplitude_damping({gamma:g})")


def unitary_channel(u: np.ndarray, name: str = "unitary") -> Channel:
    return Channel([u], name=name)


def _check_prob(p: float) -> None:
    if not 0 <= p <= 1:
        raise ValueError(f"probability {p} outside [0, 1]")


def ptm(channel, n_qubits: int | None = None) -> np.ndarray:
    """Pauli transfer matrix ``R[i, j] = Tr[P_i E(P_j)] / 2^n``.

    ``channel`` is a :class:`Channel` or any callable mapping a ``2^n`` square
    array to another (linear maps are fine, CP or not).
    """
    n = channel.n_qubits if n_qubits is None else n_qubits
    if n > MAX_PTM_QUBITS:
        raise ValueError(f"transfer matrix on {n} qubits exceeds the cap of {MAX_PTM_QUBITS}")
    labels = pauli_labels(n)
    paulis = [PauliString.from_label(lab) for lab in labels]
    dim = 1 << n
    out = np.empty((len(labels), len(labels)))
    for j, pj in enumerate(paulis):
        img = channel(pj.to_matrix())
        for i, pi in enumerate(paulis):
            out[i, j] = np.real(pi.expectation(img)) / dim
    return out


def pauli_twirl(channel: Channel) -> PauliChannel:
    """Average ``G E G`` over the Pauli group on the channel's support.

    Only the transfer-matrix diagonal survives; its entries are the Pauli
    fidelities, mapped back to error probabilities by the character transform.
    """
    if channel.n_qubits > 2:
        raise ValueError("Pauli twirling is limited to supports of at most 2 qubits")
    if isinstance(channel, PauliChannel):
        return channel
    n = channel.n_qubits
    f = np.diag(ptm(channel))
    probs = character_matrix(n) @ f / 4**n
    probs[np.abs(probs) < 1e-15] = 0.0
    probs = np.clip(probs, 0.0, None)
    return PauliChannel(dict(zip(pauli_labels(n), probs / probs.sum())), name=f"twirl({channel.name})")


def kraus_terms(channel: Channel) -> Sequence[np.ndarray]:
    return channel.kraus


def compose(*channels: Channel) -> Channel:
    """Sequential composition, first argument applied first."""
    n = channels[0].n_qubits
    ops = [np.eye(1 << n, dtype=complex)]
    for ch in channels:
        if ch.n_qubits != n:
            raise ValueError("cannot compose channels on different supports")
        ops = [k @ a for a, k in itertools.product(ops, ch.kraus)]
    return Channel(ops, name="*".join(c.name for c in channels))


def tensor(*channels: Channel) -> Channel:
    """Product channel, first argument on the leading qubits."""
    ops = [np.eye(1, dtype=complex)]
    for ch in channels:
        ops = [np.kron(a, k) for a, k in itertools.product(ops, ch.kraus)]
    return Channel(ops, name="(x)".join(c.name for c in channels))
