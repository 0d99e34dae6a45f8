"""Truncated Fock-space states and operators for a cavity coupled to a transmon.

Factor ordering is always cavity ⊗ transmon, so the basis index of
``|n, q⟩`` is ``n * n_qubit + q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

__all__ = [
    "Tolerances",
    "TOL",
    "HilbertDims",
    "QuantumState",
    "annihilation_operator",
    "number_operator",
    "qubit_lowering",
    "qubit_projector",
    "sigma_z",
    "tensor_lift",
    "expectation",
    "fock_state",
    "coherent_state",
    "cavity_superposition",
    "pure_state",
    "fidelity",
    "photon_distribution",
]


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    trace: float = 1e-10
    eigenvalue: float = -1e-9
    expectation_imag: float = 1e-10


TOL = Tolerances()


@dataclass(frozen=True)
class HilbertDims:
    """Truncation of the cavity Fock space and the number of transmon levels."""

    n_cav: int = 20
    n_qubit: int = 2

    def __post_init__(self):
        if int(self.n_cav) != self.n_cav or self.n_cav < 2:
            raise ValueError(f"n_cav must be an integer >= 2, got {self.n_cav}")
        if self.n_qubit not in (2, 3):
            raise ValueError(f"n_qubit must be 2 or 3, got {self.n_qubit}")

    @property
    def dim(self) -> int:
        return self.n_cav * self.n_qubit


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Density matrix on the truncated cavity ⊗ transmon space.

    Construction validates Hermiticity, unit trace and positivity at the
    tolerances in :data:`TOL`. The matrix is stored read-only.

    Attributes:
        dims: Truncation the matrix lives on.
        rho: ``(dim, dim)`` complex density matrix.
        norm_deficit: Probability weight lost to truncation before
            renormalization (zero for states that fit exactly).
    """

    dims: HilbertDims
    rho: np.ndarray
    norm_deficit: float = field(default=0.0, compare=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        d = self.dims.dim
        if rho.shape != (d, d):
            raise ValueError(f"rho has shape {rho.shape}, expected {(d, d)}")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > TOL.hermitian * max(1.0, np.max(np.abs(rho))):
            raise ValueError(f"rho is not Hermitian (deviation {herm:.2e})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TOL.trace:
            raise ValueError(f"rho has trace {tr!r}, expected 1")
        eig_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if eig_min < TOL.eigenvalue:
            raise ValueError(f"rho has negative eigenvalue {eig_min:.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def cavity_rho(self) -> np.ndarray:
        """Reduced density matrix of the cavity (transmon traced out)."""
        nc, nq = self.dims.n_cav, self.dims.n_qubit
        return np.einsum("iaja->ij", self.rho.reshape(nc, nq, nc, nq))

    def qubit_rho(self) -> np.ndarray:
        nc, nq = self.dims.n_cav, self.dims.n_qubit
        return np.einsum("iaib->ab", self.rho.reshape(nc, nq, nc, nq))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


def _cavity_annihilation(n_cav: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_cav, dtype=float)), 1).astype(complex)


def annihilation_operator(dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    """Cavity lowering operator ``a`` with ``a|n⟩ = √n |n-1⟩``.

    Returned on the full product space unless ``lifted`` is False, in which
    case the bare ``n_cav × n_cav`` matrix is returned.
    """
    a = _cavity_annihilation(dims.n_cav)
    return tensor_lift(a, "cavity", dims) if lifted else a


def number_operator(dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    n = np.diag(np.arange(dims.n_cav, dtype=float)).astype(complex)
    return tensor_lift(n, "cavity", dims) if lifted else n


def qubit_lowering(dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    """Transmon lowering operator; |g⟩ = index 0, |e⟩ = index 1.

    For three levels this is the ladder ``|g⟩⟨e| + √2|e⟩⟨f|``.
    """
    sm = np.diag(np.sqrt(np.arange(1, dims.n_qubit, dtype=float)), 1).astype(complex)
    return tensor_lift(sm, "transmon", dims) if lifted else sm


def qubit_projector(level: int, dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    p = np.zeros((dims.n_qubit, dims.n_qubit), dtype=complex)
    p[level, level] = 1.0
    return tensor_lift(p, "transmon", dims) if lifted else p


def sigma_z(dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    """``|e⟩⟨e| - |g⟩⟨g|`` on the lowest two transmon levels."""
    sz = np.zeros((dims.n_qubit, dims.n_qubit), dtype=complex)
    sz[0, 0], sz[1, 1] = -1.0, 1.0
    return tensor_lift(sz, "transmon", dims) if lifted else sz


def tensor_lift(op: np.ndarray, which_factor: str, dims: HilbertDims) -> np.ndarray:
    """Embed a single-factor operator into the cavity ⊗ transmon space."""
    op = np.asarray(op, dtype=complex)
    if which_factor == "cavity":
        if op.shape != (dims.n_cav, dims.n_cav):
            raise ValueError(f"cavity operator has shape {op.shape}, expected {(dims.n_cav,) * 2}")
        return np.kron(op, np.eye(dims.n_qubit))
    if which_factor == "transmon":
        if op.shape != (dims.n_qubit, dims.n_qubit):
            raise ValueError(f"transmon operator has shape {op.shape}, expected {(dims.n_qubit,) * 2}")
        return np.kron(np.eye(dims.n_cav), op)
    raise ValueError(f"unknown factor {which_factor!r}; use 'cavity' or 'transmon'")


def expectation(state: QuantumState, op: np.ndarray) -> complex:
    """``Tr(ρ·op)``. Accepts bare cavity operators as well as full-space ones."""
    op = np.asarray(op)
    if op.shape == state.rho.shape:
        return complex(np.trace(state.rho @ op))
    if op.shape == (state.dims.n_cav,) * 2:
        return complex(np.trace(state.cavity_rho() @ op))
    raise ValueError(f"operator shape {op.shape} does not match state dimension {state.rho.shape}")


def pure_state(cavity_amplitudes, dims: HilbertDims, qubit_level: int = 0) -> QuantumState:
    """Pure product state from cavity amplitudes (normalized here) and a transmon level."""
    psi_c = np.zeros(dims.n_cav, dtype=complex)
    amps = np.asarray(cavity_amplitudes, dtype=complex)
    if amps.size > dims.n_cav:
        raise ValueError(f"{amps.size} amplitudes exceed n_cav={dims.n_cav}")
    psi_c[: amps.size] = amps
    norm = np.linalg.norm(psi_c)
    if norm == 0:
        raise ValueError("zero state vector")
    psi_q = np.zeros(dims.n_qubit, dtype=complex)
    psi_q[qubit_level] = 1.0
    psi = np.kron(psi_c / norm, psi_q)
    return QuantumState(dims, np.outer(psi, psi.conj()))


def fock_state(n: int, dims: HilbertDims) -> QuantumState:
    if not 0 <= n < dims.n_cav:
        raise ValueError(f"Fock level {n} outside truncation 0..{dims.n_cav - 1}")
    amps = np.zeros(n + 1)
    amps[n] = 1.0
    return pure_state(amps, dims)


def coherent_state(alpha: complex, dims: HilbertDims) -> QuantumState:
    """Truncated, renormalized coherent state ``|α⟩ ⊗ |g⟩``.

    Raises:
        ValueError: if ``|α|² > n_cav/4``; the message names the smallest
            adequate ``n_cav``.
    """
    nbar = abs(alpha) ** 2
    if nbar > dims.n_cav / 4:
        need = int(np.ceil(4 * nbar))
        raise ValueError(f"|alpha|^2={nbar:.3g} needs n_cav >= {need} (have {dims.n_cav})")
    n = np.arange(dims.n_cav)
    log_fact = np.array([np.log(float(factorial(k))) for k in n])
    # amplitude recursion in log space avoids overflow of alpha**n / sqrt(n!)
    if alpha == 0:
        amps = np.zeros(dims.n_cav, dtype=complex)
        amps[0] = 1.0
    else:
        amps = np.exp(-nbar / 2 + n * np.log(complex(alpha)) - 0.5 * log_fact)
    deficit = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    state = pure_state(amps, dims)
    return QuantumState(dims, state.rho, norm_deficit=deficit)


def cavity_superposition(dims: HilbertDims, phase: float = 0.0) -> QuantumState:
    """``(|0⟩ + e^{iφ}|1⟩)/√2 ⊗ |g⟩``."""
    return pure_state([1.0, np.exp(1j * phase)], dims)


def photon_distribution(state: QuantumState) -> np.ndarray:
    """Cavity photon-number populations, transmon marginalized."""
    return np.real(np.diag(state.cavity_rho())).copy()


def fidelity(state: QuantumState, target: QuantumState) -> float:
    """``⟨ψ|ρ|ψ⟩`` for a pure target; Uhlmann fidelity otherwise."""
    if target.purity() > 1 - 1e-12:
        w, v = np.linalg.eigh(target.rho)
        psi = v[:, -1]
        return float(np.real(psi.conj() @ state.rho @ psi))
    from scipy.linalg import sqrtm

    s = sqrtm(target.rho)
    return float(np.real(np.trace(sqrtm(s @ state.rho @ s))) ** 2)

