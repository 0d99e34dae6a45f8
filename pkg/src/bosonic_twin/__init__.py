"""Simulation, fitting and loss budgets for a cavity quantum memory read out through a transmon."""

from .dynamics import (
    DeviceModel,
    Displace,
    IntegrationError,
    MeasureSelective,
    PulseSequence,
    Snap,
    TransmonRotation,
    Wait,
    apply_gate,
    collapse_operators,
    dispersive_hamiltonian,
    evolve,
    run_sequence,
    snap_prepare_fock1,
    snap_prepare_superposition,
)
from .fitting import FitModelKind, FitResult, auto_guess, calibrate_snap_recipe, fit, model_eval
from .hilbert import (
    HilbertDims,
    QuantumState,
    annihilation_operator,
    cavity_superposition,
    coherent_state,
    expectation,
    fidelity,
    fock_state,
    number_operator,
    tensor_lift,
)
from .lossbudget import LossChannel, channel_q_limit, compute_budget, dominant_channel, load_budget, seam_relevance_q, total_q
from .measurement import Dataset, ReadoutModel, nbar_estimate, parity_operator, readout_probability, sample_shots, wigner

__version__ = "0.1.0"
