"""
Truncated Fock space and the dispersive phase
=============================================

"""
import math

import numpy as np

from bosonic_twin import DeviceModel, HilbertDims, coherent_state, evolve, expectation, number_operator
from bosonic_twin.hilbert import QuantumState, photon_distribution, pure_state, qubit_projector

dims = HilbertDims(n_cav=20, n_qubit=2)
print("dimension", dims.dim)

# a coherent state with two photons on average
psi = coherent_state(math.sqrt(2), dims)
print("photon numbers", np.round(photon_distribution(psi)[:6], 4))
print("<n> =", expectation(psi, number_operator(dims)).real, " tail lost to truncation:", psi.norm_deficit)

# asking for too many photons fails loudly
try:
    coherent_state(3.0, dims)
except ValueError as err:
    print("guard:", err)

# transmon excited, cavity in (|0> + |1>)/sqrt(2): the |1> component picks up
# a phase 2*pi*chi*t, so after 1/(2 chi) the superposition flips sign
closed = DeviceModel(chi_over_2pi=500e3, cavity_T1=1e6, transmon_T1=1e6)
amps = np.zeros(dims.dim, complex)
amps[[1, dims.n_qubit + 1]] = 1 / math.sqrt(2)
start = QuantumState(dims, np.outer(amps, amps.conj()))
for t in (0.0, 0.5e-6, 1e-6):
    rho = evolve(start, closed, t).rho
    print(f"t = {t * 1e6:.1f} us  coherence = {rho[1, dims.n_qubit + 1]:.4f}")

# energy decay of the transmon toward a 5% thermal population
warm = DeviceModel(transmon_T1=30e-6, transmon_Pe_th=0.05)
excited = pure_state([1.0], dims, qubit_level=1)
for t in (0, 30e-6, 300e-6):
    pe = expectation(evolve(excited, warm, t), qubit_projector(1, dims)).real
    print(f"t = {t * 1e6:5.0f} us  P(e) = {pe:.4f}")
