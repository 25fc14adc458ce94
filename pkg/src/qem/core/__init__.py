"""Exact density-matrix substrate: Paulis, states, channels, gates, noisy circuits."""

from .channels import (
    Channel,
    CompleteDepolarizing,
    PauliChannel,
    amplitude_damping,
    bit_flip,
    character_matrix,
    coherent_z_rotation,
    dephasing,
    depolarizing,
    identity,
    pauli_channel,
    pauli_twirl,
    ptm,
)
from .circuit import (
    Location,
    NoisyCircuit,
    apply_location,
    circuit_fault_rate,
    fault_free_probability,
    ideal_state,
    poisson_fault_rate,
    run_circuit,
)
from .gates import Gate, apply_channel, apply_gate, gate
from .paulis import Observable, PauliString, observable, pauli_labels, pauli_matrix
from .sampling import sample_shot, sample_shots
from .states import DensityMatrix, expectation, fidelity

__all__ = [
    "Channel",
    "CompleteDepolarizing",
    "DensityMatrix",
    "Gate",
    "Location",
    "NoisyCircuit",
    "Observable",
    "PauliChannel",
    "PauliString",
    "amplitude_damping",
    "apply_channel",
    "apply_gate",
    "apply_location",
    "bit_flip",
    "character_matrix",
    "circuit_fault_rate",
    "coherent_z_rotation",
    "dephasing",
    "depolarizing",
    "expectation",
    "fault_free_probability",
    "fidelity",
    "gate",
    "ideal_state",
    "identity",
    "observable",
    "pauli_channel",
    "pauli_labels",
    "pauli_matrix",
    "pauli_twirl",
    "poisson_fault_rate",
    "ptm",
    "run_circuit",
    "sample_shot",
    "sample_shots",
]
