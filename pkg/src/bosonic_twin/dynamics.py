"""Open-system dynamics of the dispersively coupled cavity and transmon.

Two integrators are provided for the Lindblad equation:

* ``"exact"`` (default): the Liouvillian of this model only couples density
  matrix elements within a fixed photon-number-difference / transmon-level
  difference sector, so it splits into many small blocks. Each block is
  exponentiated directly, which is exact for any duration and cost independent
  of how fast the dispersive phase winds.
* ``"rk45"``: an embedded Dormand-Prince 5(4) pair with adaptive steps,
  Hermitian symmetrization after every accepted step. Useful as an
  independent check; slow when ``chi * duration`` is large.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .hilbert import (
    HilbertDims,
    QuantumState,
    annihilation_operator,
    number_operator,
    qubit_lowering,
    qubit_projector,
    sigma_z,
)

__all__ = [
    "DeviceModel",
    "IntegrationError",
    "Displace",
    "Snap",
    "TransmonRotation",
    "Wait",
    "MeasureSelective",
    "GateStep",
    "PulseSequence",
    "dispersive_hamiltonian",
    "collapse_operators",
    "evolve",
    "apply_gate",
    "gate_unitary",
    "displacement_operator",
    "snap_prepare_fock1",
    "snap_prepare_superposition",
    "FOCK1_RECIPE",
    "SUPERPOSITION_RECIPE",
    "run_sequence",
]

TWO_PI = 2 * math.pi


class IntegrationError(RuntimeError):
    """Raised when the adaptive integrator cannot make progress.

    Attributes:
        time_reached: simulated time (s) at which integration stopped.
        sweep_index: index of the sweep point being simulated, when known.
    """

    def __init__(self, message: str, time_reached: float, sweep_index: int | None = None):
        super().__init__(message)
        self.time_reached = time_reached
        self.sweep_index = sweep_index


@dataclass(frozen=True)
class DeviceModel:
    """Physical parameters of the memory; SI units throughout.

    ``f_storage``, ``f_transmon`` and ``f_readout`` are bookkeeping only: the
    simulation runs in the frame rotating with both bare modes.
    """

    chi_over_2pi: float = 500e3
    cavity_T1: float = 1.4e-3
    cavity_Tphi: float = math.inf
    nbar_th: float = 0.0
    transmon_T1: float = 30e-6
    transmon_Tphi: float = math.inf
    transmon_Pe_th: float = 0.0
    kerr_over_2pi: float = 0.0
    f_storage: float = 5.4e9
    f_transmon: float = 6.3e9
    f_readout: float = 8.9e9

    def __post_init__(self):
        for name in ("cavity_T1", "cavity_Tphi", "transmon_T1", "transmon_Tphi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.nbar_th < 1:
            raise ValueError(f"nbar_th must be in [0, 1), got {self.nbar_th}")
        if not 0 <= self.transmon_Pe_th < 0.5:
            raise ValueError(f"transmon_Pe_th must be in [0, 0.5), got {self.transmon_Pe_th}")

    @property
    def kappa(self) -> float:
        return 1.0 / self.cavity_T1


def dispersive_hamiltonian(model: DeviceModel, dims: HilbertDims) -> np.ndarray:
    """``H/ħ = -2π χ a†a ⊗ |e⟩⟨e|`` in rad/s.

    A third transmon level, when present, picks up twice the shift. The
    optional self-Kerr term is ``-2π (K/2) a†a†aa``.
    """
    n = number_operator(dims)
    h = -TWO_PI * model.chi_over_2pi * n @ qubit_projector(1, dims)
    if dims.n_qubit == 3:
        h = h - 2 * TWO_PI * model.chi_over_2pi * n @ qubit_projector(2, dims)
    if model.kerr_over_2pi:
        h = h - TWO_PI * 0.5 * model.kerr_over_2pi * (n @ n - n)
    return h


def collapse_operators(model: DeviceModel, dims: HilbertDims) -> list[np.ndarray]:
    """Jump operators for cavity loss/gain/dephasing and transmon decay/heating/dephasing.

    Operators with zero rate are omitted.
    """
    a = annihilation_operator(dims)
    ad = a.conj().T
    sm = qubit_lowering(dims)
    kappa = model.kappa
    gamma1 = 1.0 / model.transmon_T1
    p = model.transmon_Pe_th
    rated = [
        (kappa * (1 + model.nbar_th), a),
        (kappa * model.nbar_th, ad),
        (2.0 / model.cavity_Tphi, number_operator(dims)),
        (gamma1 * (1 - p), sm),
        (gamma1 * p, sm.conj().T),
        (1.0 / (2.0 * model.transmon_Tphi), sigma_z(dims)),
    ]
    return [math.sqrt(rate) * op for rate, op in rated if rate > 0]


def _lindblad_rhs(rho: np.ndarray, h: np.ndarray, cops: list[np.ndarray], cdc: np.ndarray) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    for c in cops:
        out += c @ rho @ c.conj().T
    out -= 0.5 * (cdc @ rho + rho @ cdc)
    return out


def _liouvillian(h: np.ndarray, cops: list[np.ndarray]) -> sp.csr_matrix:
    # row-major vectorization: vec(A rho B) = kron(A, B.T) vec(rho)
    d = h.shape[0]
    eye = sp.identity(d, format="csr", dtype=complex)
    hs = sp.csr_matrix(h)
    L = -1j * (sp.kron(hs, eye) - sp.kron(eye, hs.T))
    for c in cops:
        cs = sp.csr_matrix(c)
        cdc = cs.conj().T @ cs
        L = L + sp.kron(cs, cs.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
    L = sp.csr_matrix(L)
    L.eliminate_zeros()
    return L


@dataclass(frozen=True)
class _Blocks:
    index_sets: tuple
    matrices: tuple


@lru_cache(maxsize=32)
def _liouvillian_blocks(model: DeviceModel, dims: HilbertDims) -> _Blocks:
    L = _liouvillian(dispersive_hamiltonian(model, dims), collapse_operators(model, dims))
    pattern = (abs(L) + abs(L).T) > 0
    n_comp, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_comp + 1))
    idx_sets, mats = [], []
    Ld = L.tocsc()
    for k in range(n_comp):
        idx = order[bounds[k] : bounds[k + 1]]
        idx_sets.append(idx)
        mats.append(Ld[idx][:, idx].toarray())
    return _Blocks(tuple(idx_sets), tuple(mats))


@lru_cache(maxsize=256)
def _block_propagators(model: DeviceModel, dims: HilbertDims, duration: float) -> tuple:
    blocks = _liouvillian_blocks(model, dims)
    return tuple(scipy.linalg.expm(m * duration) for m in blocks.matrices)


def _evolve_exact(rho: np.ndarray, model: DeviceModel, dims: HilbertDims, duration: float) -> np.ndarray:
    blocks = _liouvillian_blocks(model, dims)
    props = _block_propagators(model, dims, float(duration))
    v = rho.reshape(-1)
    out = np.zeros_like(v)
    for idx, prop in zip(blocks.index_sets, props):
        sub = v[idx]
        if np.any(sub):
            out[idx] = prop @ sub
    if not np.all(np.isfinite(out)):
        raise IntegrationError("non-finite propagator output", time_reached=0.0)
    return out.reshape(rho.shape)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


MAX_RK45_STEPS = 1_000_000


def _evolve_rk45(
    rho: np.ndarray,
    model: DeviceModel,
    dims: HilbertDims,
    duration: float,
    rtol: float,
    atol: float,
) -> np.ndarray:
    h_op = dispersive_hamiltonian(model, dims)
    cops = collapse_operators(model, dims)
    cdc = sum((c.conj().T @ c for c in cops), np.zeros_like(h_op))

    def f(y):
        return _lindblad_rhs(y, h_op, cops, cdc)

    t = 0.0
    y = rho.copy()
    rate = max(np.max(np.abs(h_op)), np.max(np.abs(cdc)) if cops else 0.0, 1.0 / duration)
    step = min(duration, 0.1 / rate)
    k1 = f(y)
    # below ~1e-12 of the span, rounding in t swamps the step
    min_step = 1e-12 * duration
    n_steps = 0
    while t < duration:
        step = min(step, duration - t)
        if step < min_step and duration - t > min_step:
            raise IntegrationError(f"step size underflow at t={t:.6g} s", time_reached=t)
        n_steps += 1
        if n_steps > MAX_RK45_STEPS:
            raise IntegrationError(f"more than {MAX_RK45_STEPS} steps, stopped at t={t:.6g} s", time_reached=t)
        ks = [k1]
        for i in range(1, 7):
            yi = y + step * sum(a * k for a, k in zip(_DP_A[i], ks))
            ks.append(f(yi))
        y_new = y + step * sum(b * k for b, k in zip(_DP_B5, ks) if b)
        err = step * sum(e * k for e, k in zip(_DP_E, ks) if e)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))
        if err_norm <= 1.0:
            t += step
            y = 0.5 * (y_new + y_new.conj().T)
            k1 = f(y)
            factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
        else:
            factor = max(0.2, 0.9 * err_norm ** -0.2)
        step *= factor
    return y


def evolve(
    state: QuantumState,
    model: DeviceModel,
    duration: float,
    method: str = "exact",
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> QuantumState:
    """Propagate ``state`` under the Lindblad equation for ``duration`` seconds.

    Args:
        state: Initial density matrix.
        model: Device parameters.
        duration: Evolution time in seconds, ``>= 0``.
        method: ``"exact"`` (block-diagonal propagator) or ``"rk45"``.
        rtol, atol: Error tolerances for ``"rk45"``.

    Raises:
        IntegrationError: the adaptive step size underflowed; carries the
            time reached.
    """
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if duration == 0:
        return state
    rho = np.array(state.rho)
    if method == "exact":
        out = _evolve_exact(rho, model, state.dims, duration)
    elif method == "rk45":
        out = _evolve_rk45(rho, model, state.dims, duration, rtol, atol)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = 0.5 * (out + out.conj().T)
    return QuantumState(state.dims, out)


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

SWEEP = None  # marker: a Wait with duration=SWEEP takes the swept delay


@dataclass(frozen=True)
class Displace:
    """Cavity displacement ``exp(α a† - α* a)``.

    With ``detuning`` (Hz) the amplitude is rotated by ``2π·detuning·t``
    where ``t`` is the swept delay; with ``sweep_phase`` the swept value is
    used directly as the rotation angle.
    """

    alpha: complex
    detuning: float = 0.0
    sweep_phase: bool = False


@dataclass(frozen=True)
class Snap:
    phases: tuple

    def __init__(self, phases):
        object.__setattr__(self, "phases", tuple(float(p) for p in phases))


@dataclass(frozen=True)
class TransmonRotation:
    """Rotation by ``theta`` about the equatorial axis at azimuth ``phi``.

    With ``selective=n`` the rotation only acts when the cavity holds
    exactly ``n`` photons (idealized number-selective pulse).
    """

    theta: float
    phi: float = 0.0
    selective: int | None = None


@dataclass(frozen=True)
class Wait:
    duration: float | None = SWEEP


@dataclass(frozen=True)
class MeasureSelective:
    """Marks the readout; overrides the readout model's selected photon number."""

    photon: int = 0


GateStep = Union[Displace, Snap, TransmonRotation, Wait, MeasureSelective]


@lru_cache(maxsize=4096)
def _displacement_cavity(alpha: complex, n_cav: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, n_cav, dtype=float)), 1).astype(complex)
    return scipy.linalg.expm(alpha * a.conj().T - np.conj(alpha) * a)


def displacement_operator(alpha: complex, dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    d = _displacement_cavity(complex(alpha), dims.n_cav)
    return np.kron(d, np.eye(dims.n_qubit)) if lifted else d.copy()


def _rotation(theta: float, phi: float, n_qubit: int) -> np.ndarray:
    r = np.eye(n_qubit, dtype=complex)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    r[0, 0] = r[1, 1] = c
    r[0, 1] = -1j * s * np.exp(-1j * phi)
    r[1, 0] = -1j * s * np.exp(1j * phi)
    return r


def gate_unitary(step: GateStep, dims: HilbertDims, sweep_value: float | None = None, sweep_name: str = "delay") -> np.ndarray:
    """Full-space unitary of an instantaneous gate, after resolving sweep references."""
    if isinstance(step, Displace):
        alpha = complex(step.alpha)
        if step.sweep_phase:
            if sweep_value is None or sweep_name != "phase":
                raise ValueError("Displace(sweep_phase=True) needs a 'phase' sweep")
            alpha *= np.exp(1j * sweep_value)
        if step.detuning:
            if sweep_value is None or sweep_name != "delay":
                raise ValueError("Displace with detuning needs a 'delay' sweep")
            alpha *= np.exp(1j * TWO_PI * step.detuning * sweep_value)
        return displacement_operator(alpha, dims)
    if isinstance(step, Snap):
        if len(step.phases) > dims.n_cav:
            raise ValueError(f"Snap has {len(step.phases)} phases, n_cav={dims.n_cav}")
        theta = np.zeros(dims.n_cav)
        theta[: len(step.phases)] = step.phases
        return np.kron(np.diag(np.exp(1j * theta)), np.eye(dims.n_qubit))
    if isinstance(step, TransmonRotation):
        r = _rotation(step.theta, step.phi, dims.n_qubit)
        if step.selective is None:
            return np.kron(np.eye(dims.n_cav), r)
        if not 0 <= step.selective < dims.n_cav:
            raise ValueError(f"selective photon number {step.selective} outside truncation")
        proj = np.zeros((dims.n_cav, dims.n_cav))
        proj[step.selective, step.selective] = 1.0
        return np.kron(proj, r) + np.kron(np.eye(dims.n_cav) - proj, np.eye(dims.n_qubit))
    if isinstance(step, MeasureSelective):
        return np.eye(dims.dim, dtype=complex)
    raise TypeError(f"not an instantaneous gate: {step!r}")


def apply_gate(
    state: QuantumState,
    step: GateStep,
    dims: HilbertDims | None = None,
    *,
    model: DeviceModel | None = None,
    sweep_value: float | None = None,
    sweep_name: str = "delay",
) -> QuantumState:
    """Apply one program step. ``Wait`` steps need ``model`` and evolve the state."""
    dims = dims or state.dims
    if dims != state.dims:
        raise ValueError(f"state dims {state.dims} differ from {dims}")
    if isinstance(step, Wait):
        if model is None:
            raise ValueError("Wait step needs a DeviceModel")
        duration = step.duration
        if duration is None:
            if sweep_name != "delay" or sweep_value is None:
                raise ValueError("Wait() without duration needs a 'delay' sweep value")
            duration = sweep_value
        return evolve(state, model, duration)
    u = gate_unitary(step, dims, sweep_value, sweep_name)
    dev = np.max(np.abs(u.conj().T @ u - np.eye(dims.dim)))
    if dev > 1e-10:
        raise ValueError(f"gate {step!r} is not unitary to 1e-10 (deviation {dev:.2e})")
    rho = u @ state.rho @ u.conj().T
    return QuantumState(dims, 0.5 * (rho + rho.conj().T))


# ---------------------------------------------------------------------------
# SNAP state preparation
# ---------------------------------------------------------------------------

# Displacements (real) and SNAP phases from fitting.calibrate_snap_recipe at
# n_cav=20. A single Displace-Snap-Displace reaches at most F=0.981 for |1>,
# hence two SNAPs for the Fock state.
FOCK1_RECIPE = {
    "displacements": (-1.0, 1.0, -1.0),
    "snap_phases": ((0.0, 1.9381435), (1.9381436, 2.3218614)),
}
SUPERPOSITION_RECIPE = {
    "displacements": (-0.5607839, 0.2433881),
    "snap_phases": ((math.pi, 0.0),),
}


def recipe_steps(recipe: dict) -> list[GateStep]:
    """Interleave displacements and SNAPs: D, S, D, S, ..., D."""
    disp = recipe["displacements"]
    snaps = recipe["snap_phases"]
    if len(disp) != len(snaps) + 1:
        raise ValueError("recipe needs exactly one more displacement than SNAPs")
    steps: list[GateStep] = [Displace(disp[0])]
    for phases, beta in zip(snaps, disp[1:]):
        steps.append(Snap(phases))
        steps.append(Displace(beta))
    return steps


def snap_prepare_fock1(dims: HilbertDims | None = None) -> list[GateStep]:
    """Gate list taking vacuum to (approximately) |1⟩."""
    return recipe_steps(FOCK1_RECIPE)


def snap_prepare_superposition(dims: HilbertDims | None = None) -> list[GateStep]:
    """Gate list taking vacuum to (approximately) (|0⟩+|1⟩)/√2."""
    return recipe_steps(SUPERPOSITION_RECIPE)


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

_SWEEP_NAMES = ("delay", "phase")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered program plus the grid of the single swept parameter.

    ``sweep_name`` is ``"delay"`` (seconds; consumed by ``Wait()`` and by
    detuned displacements) or ``"phase"`` (radians; consumed by
    ``Displace(sweep_phase=True)``).
    """

    steps: tuple
    sweep_name: str
    sweep_values: np.ndarray = field(compare=False)

    def __init__(self, steps: Sequence[GateStep], sweep_name: str, sweep_values):
        values = np.asarray(sweep_values, dtype=float)
        if sweep_name not in _SWEEP_NAMES:
            raise ValueError(f"sweep_name must be one of {_SWEEP_NAMES}, got {sweep_name!r}")
        if values.ndim != 1 or values.size == 0:
            raise ValueError("sweep grid must be a non-empty 1-D sequence")
        diffs = np.diff(values)
        if values.size > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep grid must be strictly monotone")
        if sweep_name == "delay" and np.any(values < 0):
            raise ValueError("delays must be >= 0")
        for s in steps:
            if isinstance(s, Wait) and s.duration is not None and s.duration < 0:
                raise ValueError(f"negative wait {s.duration}")
            if isinstance(s, Snap) and not all(np.isfinite(s.phases)):
                raise ValueError("non-finite SNAP phase")
        values.setflags(write=False)
        object.__setattr__(self, "steps", tuple(steps))
        object.__setattr__(self, "sweep_name", sweep_name)
        object.__setattr__(self, "sweep_values", values)


def _n_workers() -> int:
    env = os.environ.get("BOSONIC_TWIN_THREADS")
    return max(1, int(env)) if env else 1


def _simulate_point(seq: PulseSequence, model, dims, readout, initial, value, index):
    from .measurement import readout_probability

    state = initial
    ro = readout
    try:
        for step in seq.steps:
            if isinstance(step, MeasureSelective):
                ro = replace(ro, selective_photon=step.photon)
                continue
            state = apply_gate(state, step, dims, model=model, sweep_value=value, sweep_name=seq.sweep_name)
    except IntegrationError as exc:
        raise IntegrationError(f"sweep point {index}: {exc}", exc.time_reached, sweep_index=index) from exc
    return readout_probability(state, ro, dims)


def run_sequence(seq: PulseSequence, model: DeviceModel, dims: HilbertDims, readout, initial: QuantumState | None = None):
    """Run ``seq`` once per sweep value and record the readout probability.

    Every sweep point starts again from ``initial`` (vacuum ⊗ |g⟩ by
    default), so the trace does not depend on evaluation order. Points are
    farmed out to ``BOSONIC_TWIN_THREADS`` worker threads when that
    variable is set.

    Returns:
        measurement.Dataset with the probabilities and, if the readout model
        has ``shots``, the sampled fractions.
    """
    from .hilbert import fock_state
    from .measurement import Dataset, sample_shots

    if initial is None:
        initial = fock_state(0, dims)
    values = seq.sweep_values
    args = [(seq, model, dims, readout, initial, float(v), i) for i, v in enumerate(values)]
    workers = _n_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            probs = list(pool.map(lambda a: _simulate_point(*a), args))
    else:
        probs = [_simulate_point(*a) for a in args]
    probs = np.clip(np.array(probs, dtype=float), 0.0, 1.0)
    shots = None
    if readout.shots:
        shots = np.array([sample_shots(p, readout, i) for i, p in enumerate(probs)])
    return Dataset(seq.sweep_name, values.copy(), probs, shot_fraction=shots, shots_per_point=readout.shots)
