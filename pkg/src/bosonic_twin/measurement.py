"""Transmon-mediated cavity readout, finite-shot sampling and Wigner maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import eval_genlaguerre, gammaln

from .hilbert import HilbertDims, QuantumState, fock_state

__all__ = [
    "ReadoutModel",
    "Dataset",
    "WignerGrid",
    "readout_probability",
    "sample_shots",
    "parity_operator",
    "displacement_elements",
    "wigner",
    "wigner_at",
    "nbar_estimate",
    "SteadyStateError",
]

WIGNER_MAX = 2 / math.pi


class SteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReadoutModel:
    """Readout collapsed to an affine map of one photon-number population.

    ``P(readout) = baseline + contrast * P(n = selective_photon)``.
    """

    contrast: float = 1.0
    baseline: float = 0.0
    selective_photon: int = 0
    shots: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.contrast <= 1:
            raise ValueError(f"contrast must be in (0, 1], got {self.contrast}")
        if not 0 <= self.baseline < 1:
            raise ValueError(f"baseline must be in [0, 1), got {self.baseline}")
        if self.baseline + self.contrast > 1 + 1e-12:
            raise ValueError("baseline + contrast must not exceed 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")
        if self.selective_photon < 0:
            raise ValueError("selective_photon must be >= 0")


@dataclass(eq=False)
class Dataset:
    """Sweep-indexed readout trace.

    ``trace`` holds the exact readout probabilities; ``shot_fraction`` holds
    the sampled fractions when finite shots were requested. ``observed`` is
    what a fit should consume.
    """

    sweep_name: str
    sweep_values: np.ndarray
    trace: np.ndarray
    shot_fraction: np.ndarray | None = None
    shots_per_point: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sweep_values = np.asarray(self.sweep_values, dtype=float)
        self.trace = np.asarray(self.trace, dtype=float)
        if self.sweep_values.shape != self.trace.shape or self.trace.ndim != 1:
            raise ValueError("sweep_values and trace must be 1-D and of equal length")
        if self.shot_fraction is not None:
            self.shot_fraction = np.asarray(self.shot_fraction, dtype=float)
            if self.shot_fraction.shape != self.trace.shape:
                raise ValueError("shot_fraction length differs from trace")
        for arr in (self.trace, self.shot_fraction):
            if arr is not None and (np.any(arr < 0) or np.any(arr > 1)):
                raise ValueError("probabilities must lie in [0, 1]")

    @property
    def observed(self) -> np.ndarray:
        return self.trace if self.shot_fraction is None else self.shot_fraction

    def __len__(self):
        return self.trace.size


def readout_probability(state: QuantumState, ro: ReadoutModel, dims: HilbertDims | None = None) -> float:
    dims = dims or state.dims
    n = ro.selective_photon
    if n >= dims.n_cav:
        return float(ro.baseline)
    nq = dims.n_qubit
    pop = float(np.real(np.trace(state.rho[n * nq : (n + 1) * nq, n * nq : (n + 1) * nq])))
    return ro.baseline + ro.contrast * pop


def sample_shots(p: float, ro: ReadoutModel, index: int = 0) -> float:
    """Binomial shot fraction; the stream depends only on ``(rng_seed, index)``."""
    if not ro.shots:
        raise ValueError("readout model has no shot count")
    p = min(max(float(p), 0.0), 1.0)
    rng = np.random.default_rng([int(ro.rng_seed), int(index)])
    return rng.binomial(ro.shots, p) / ro.shots


def parity_operator(dims: HilbertDims, lifted: bool = True) -> np.ndarray:
    par = np.diag((-1.0) ** np.arange(dims.n_cav)).astype(complex)
    return np.kron(par, np.eye(dims.n_qubit)) if lifted else par


def displacement_elements(beta: complex, n: int) -> np.ndarray:
    """Exact ``⟨m|D(β)|k⟩`` for ``m, k < n`` (untruncated displacement).

    Uses the associated-Laguerre closed form, so there is no error from
    exponentiating a truncated generator.
    """
    beta = complex(beta)
    x = abs(beta) ** 2
    m = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    lo = np.minimum(m, k)
    hi = np.maximum(m, k)
    diff = hi - lo
    log_pref = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - x / 2
    lag = eval_genlaguerre(lo, diff, x)
    # beta**diff for m >= k, (-beta*)**diff for m < k
    base = np.where(m >= k, beta, -np.conj(beta))
    with np.errstate(divide="ignore", invalid="ignore"):
        powers = np.where(diff == 0, 1.0 + 0j, base ** diff)
    return np.exp(log_pref) * lag * powers


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """Wigner function sampled on a rectangular grid of the α plane.

    ``values[i, j]`` is ``W(re[j] + 1j * im[i])``, normalized so that the
    integral over the plane is one and ``|W| <= 2/π``.
    """

    re_range: tuple
    im_range: tuple
    n_points: int
    values: np.ndarray

    @property
    def re(self) -> np.ndarray:
        return np.linspace(*self.re_range, self.n_points)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(*self.im_range, self.n_points)

    def integral(self) -> float:
        """Trapezoidal integral over the grid."""
        return float(trapezoid(trapezoid(self.values, self.re, axis=1), self.im))


def _cavity_rho(state) -> np.ndarray:
    if isinstance(state, QuantumState):
        return state.cavity_rho()
    return np.asarray(state, dtype=complex)


def wigner_at(state, alpha: complex) -> float:
    """``W(α) = (2/π) Tr[D(α) P D†(α) ρ]`` at one point.

    Evaluated through ``D(α) P D†(α) = D(2α) P`` with exact matrix elements.
    """
    rho = _cavity_rho(state)
    n = rho.shape[0]
    d2 = displacement_elements(2 * alpha, n)
    par = (-1.0) ** np.arange(n)
    return float(WIGNER_MAX * np.real(np.sum(d2 * par[None, :] * rho.T)))


def wigner(
    state,
    re_range: tuple = (-2.5, 2.5),
    im_range: tuple | None = None,
    n_points: int = 61,
) -> WignerGrid:
    """Wigner function of the cavity on an ``n_points × n_points`` grid.

    Raises:
        ValueError: if a grid bound exceeds ``sqrt(n_cav)/2``.
    """
    im_range = re_range if im_range is None else im_range
    rho = _cavity_rho(state)
    n = rho.shape[0]
    bound = max(abs(v) for v in (*re_range, *im_range))
    if bound > math.sqrt(n) / 2 + 1e-12:
        need = math.ceil(4 * bound**2)
        raise ValueError(f"grid bound {bound:g} needs n_cav >= {need} (have {n})")
    xs = np.linspace(*re_range, n_points)
    ys = np.linspace(*im_range, n_points)
    par = (-1.0) ** np.arange(n)
    rp = rho.T * par[None, :]
    values = np.empty((n_points, n_points))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            values[i, j] = np.real(np.sum(displacement_elements(2 * complex(x, y), n) * rp))
    values *= WIGNER_MAX
    return WignerGrid(tuple(re_range), tuple(im_range), n_points, values)


def nbar_estimate(model, dims: HilbertDims, ro: ReadoutModel | None = None, settle_T1: float = 20.0) -> float:
    """Thermal occupation inferred from the steady-state vacuum readout.

    The vacuum is relaxed for ``settle_T1`` cavity lifetimes, the readout
    probability is inverted to ``P(0)`` and mapped to ``n̄ ≈ -ln P(0)``.
    This is our estimator choice, accurate to ``O(n̄²)``.

    Raises:
        SteadyStateError: populations still change by more than 1e-6
            between ``settle_T1`` and ``settle_T1 + 2`` lifetimes.
    """
    from .dynamics import evolve

    ro = ro or ReadoutModel()
    if settle_T1 < 10:
        raise ValueError("settle_T1 must be >= 10")
    vac = fock_state(0, dims)
    rho_a = evolve(vac, model, settle_T1 * model.cavity_T1)
    rho_b = evolve(rho_a, model, 2 * model.cavity_T1)
    residual = float(np.max(np.abs(rho_a.rho - rho_b.rho)))
    if residual > 1e-6:
        raise SteadyStateError(f"steady-state residual {residual:.2e} exceeds 1e-6")
    ro0 = ReadoutModel(ro.contrast, ro.baseline, 0)
    p = readout_probability(rho_b, ro0, dims)
    p0 = (p - ro.baseline) / ro.contrast
    return float(max(0.0, -math.log(p0)))
