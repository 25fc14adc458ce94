"""Born-rule shot sampling of Pauli observables."""

from __future__ import annotations

import numpy as np

from .paulis import Observable, PauliString, as_pauli_string, observable
from .rng import block_streams, derive_seed
from .states import as_array


def _single_term(obs) -> tuple[float, PauliString]:
    if isinstance(obs, (str, PauliString)):
        p = as_pauli_string(obs)
        if not p.is_hermitian:
            raise ValueError("Pauli term is not Hermitian")
        return float(p.phase.real), PauliString(p.n_qubits, p.x_mask, p.z_mask)
    obs = observable(obs)
    if not obs.is_single_term:
        raise ValueError("sample_shot needs a single Pauli term; decompose composite observables first")
    return obs.signed_terms()[0]


def plus_probability(state, pauli: PauliString) -> float:
    """Probability of the +1 outcome when measuring ``pauli``."""
    ev = float(np.real(pauli.expectation(as_array(state))))
    return float(np.clip((1 + ev) / 2, 0.0, 1.0))


def sample_shot(state, obs, rng: np.random.Generator) -> float:
    """One eigenvalue of a single Pauli term, drawn with Born probabilities."""
    coeff, p = _single_term(obs)
    if p.x_mask == 0 and p.z_mask == 0:
        return coeff
    return coeff * (1.0 if rng.random() < plus_probability(state, p) else -1.0)


def sample_pauli_outcomes(plus_probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized +-1 outcomes for per-shot +1 probabilities."""
    return np.where(rng.random(plus_probs.shape) < plus_probs, 1.0, -1.0)


def sample_shots(state, obs, shots: int, rng, key: tuple[int, ...] = ()) -> np.ndarray:
    """``shots`` single-shot values of ``obs``.

    Composite observables are estimated term by term: each shot draws an
    independent outcome for every term and returns ``sum_i c_i s_i``.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    obs = observable(obs) if not isinstance(obs, (str, PauliString)) else Observable.from_pauli(obs)
    terms = obs.signed_terms()
    probs = [plus_probability(state, p) if (p.x_mask or p.z_mask) else 1.0 for _, p in terms]
    seed = derive_seed(rng)
    out = np.empty(shots)
    for start, size, g in block_streams(seed, key, shots):
        u = g.random((size, len(terms)))
        signs = np.where(u < np.array(probs), 1.0, -1.0)
        out[start : start + size] = signs @ np.array([c for c, _ in terms])
    return out
