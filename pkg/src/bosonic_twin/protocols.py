"""The three cavity coherence measurements and a per-device characterization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    DeviceModel,
    Displace,
    MeasureSelective,
    PulseSequence,
    Wait,
    run_sequence,
    snap_prepare_fock1,
    snap_prepare_superposition,
)
from .fitting import FitModelKind, FitResult, fit
from .hilbert import HilbertDims
from .measurement import Dataset, ReadoutModel, nbar_estimate

__all__ = [
    "EXPERIMENTS",
    "FIT_KIND",
    "expected_T2",
    "default_delays",
    "default_detuning",
    "t1_fock_sequence",
    "t1_coherent_sequence",
    "t2_ramsey_sequence",
    "run_experiment",
    "DeviceSummary",
    "characterize_device",
    "tphi_for_T2",
]

EXPERIMENTS = ("t1_fock", "t1_coherent", "t2_ramsey", "wigner", "nbar")
FIT_KIND = {
    "t1_fock": FitModelKind.SINGLE_EXP,
    "t1_coherent": FitModelKind.COHERENT_VACUUM,
    "t2_ramsey": FitModelKind.RAMSEY_FRINGE,
}
DEFAULT_POINTS = 41
RAMSEY_READOUT_AMPLITUDE = 1.0


def expected_T2(model: DeviceModel) -> float:
    """``1/T2 = 1/(2 T1) + 1/Tphi`` for the cavity."""
    return 1.0 / (0.5 / model.cavity_T1 + 1.0 / model.cavity_Tphi)


def tphi_for_T2(T1: float, T2: float) -> float:
    """Pure-dephasing time giving a target ``T2`` at a given ``T1``."""
    inv = 1.0 / T2 - 0.5 / T1
    if inv <= 0:
        raise ValueError(f"T2={T2} exceeds the 2*T1={2 * T1} limit")
    return 1.0 / inv


def default_delays(kind: str, model: DeviceModel, points: int = DEFAULT_POINTS) -> np.ndarray:
    """41 delays over 5·T1 (T1 experiments) or 3·T2 (Ramsey)."""
    span = 3 * expected_T2(model) if kind == "t2_ramsey" else 5 * model.cavity_T1
    return np.linspace(0.0, span, points)


def default_detuning(delays) -> float:
    """Artificial detuning putting five fringes in the sweep window."""
    span = float(np.max(delays) - np.min(delays))
    return 5.0 / span


def t1_fock_sequence(delays) -> PulseSequence:
    """SNAP-prepare |1⟩, wait, read out selectively on zero photons."""
    return PulseSequence([*snap_prepare_fock1(), Wait(), MeasureSelective(0)], "delay", delays)


def t1_coherent_sequence(delays, alpha: complex = math.sqrt(2)) -> PulseSequence:
    """Displace to |α⟩, wait, read out selectively on zero photons."""
    return PulseSequence([Displace(alpha), Wait(), MeasureSelective(0)], "delay", delays)


def t2_ramsey_sequence(delays, detuning: float, amplitude: float = RAMSEY_READOUT_AMPLITUDE) -> PulseSequence:
    """SNAP-prepare (|0⟩+|1⟩)/√2, wait, displace with a delay-advanced phase, read out.

    With a readout displacement of unit amplitude the vacuum population
    after it is ``e^{-1}(P0 + P1) - 2e^{-1}|ρ01|cos(...)`` for states in the
    {0, 1} subspace, so energy decay leaves the fringe baseline flat.
    """
    steps = [*snap_prepare_superposition(), Wait(), Displace(amplitude, detuning=detuning), MeasureSelective(0)]
    return PulseSequence(steps, "delay", delays)


def run_experiment(
    kind: str,
    model: DeviceModel,
    dims: HilbertDims | None = None,
    readout: ReadoutModel | None = None,
    delays=None,
    alpha: complex = math.sqrt(2),
    detuning: float | None = None,
) -> Dataset:
    dims = dims or HilbertDims()
    readout = readout or ReadoutModel()
    if delays is None:
        delays = default_delays(kind, model)
    delays = np.asarray(delays, dtype=float)
    if kind == "t1_fock":
        seq = t1_fock_sequence(delays)
    elif kind == "t1_coherent":
        seq = t1_coherent_sequence(delays, alpha)
    elif kind == "t2_ramsey":
        detuning = default_detuning(delays) if detuning is None else detuning
        seq = t2_ramsey_sequence(delays, detuning)
    else:
        raise ValueError(f"{kind!r} is not a swept experiment")
    ds = run_sequence(seq, model, dims, readout)
    ds.meta.update(kind=kind)
    if kind == "t2_ramsey":
        ds.meta.update(detuning=detuning)
    return ds


@dataclass
class DeviceSummary:
    """One row of a coherence table; times in seconds."""

    name: str
    T1_fock: float = math.nan
    T1_coherent: float = math.nan
    T2: float = math.nan
    nbar: float = math.nan
    stderr: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "T1_fock_s": self.T1_fock,
            "T1_coherent_s": self.T1_coherent,
            "T2_s": self.T2,
            "nbar": self.nbar,
            "stderr": dict(self.stderr),
            "errors": dict(self.errors),
        }


def characterize_device(
    model: DeviceModel,
    dims: HilbertDims | None = None,
    readout: ReadoutModel | None = None,
    name: str = "device",
    points: int = DEFAULT_POINTS,
) -> DeviceSummary:
    """Simulate and fit T1 (Fock and coherent), T2 (Ramsey) and estimate n̄.

    A failing step is recorded in ``errors`` and leaves its column NaN.
    """
    dims = dims or HilbertDims()
    readout = readout or ReadoutModel()
    row = DeviceSummary(name)
    for kind, attr, pname in (
        ("t1_fock", "T1_fock", "T1"),
        ("t1_coherent", "T1_coherent", "T1"),
        ("t2_ramsey", "T2", "T2"),
    ):
        try:
            ds = run_experiment(kind, model, dims, readout, default_delays(kind, model, points))
            res: FitResult = fit(FIT_KIND[kind], ds)
            if not res.converged:
                raise RuntimeError(f"fit did not converge: {res.message}")
            setattr(row, attr, res.params[pname])
            row.stderr[attr] = res.stderr[pname]
        except Exception as exc:  # recorded per row, the table carries on
            row.errors[kind] = f"{type(exc).__name__}: {exc}"
    try:
        row.nbar = nbar_estimate(model, dims, readout)
    except Exception as exc:
        row.errors["nbar"] = f"{type(exc).__name__}: {exc}"
    return row
