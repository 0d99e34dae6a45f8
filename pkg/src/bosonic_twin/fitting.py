"""Least-squares fitting of the decay models and SNAP recipe calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "FitModelKind",
    "FitResult",
    "FitError",
    "FlatDataError",
    "PARAM_NAMES",
    "model_eval",
    "model_jacobian",
    "fit",
    "auto_guess",
    "levenberg_marquardt",
    "recipe_fidelity",
    "calibrate_snap_recipe",
]


class FitModelKind(str, Enum):
    SINGLE_EXP = "single_exp"
    COHERENT_VACUUM = "coherent_vacuum"
    RAMSEY_FRINGE = "ramsey_fringe"


PARAM_NAMES = {
    FitModelKind.SINGLE_EXP: ("A", "T1", "C"),
    FitModelKind.COHERENT_VACUUM: ("A", "n0", "T1", "C"),
    FitModelKind.RAMSEY_FRINGE: ("A", "T2", "delta", "phi", "C"),
}
# parameters optimized in log space to keep them positive
_LOG_PARAMS = {
    FitModelKind.SINGLE_EXP: ("T1",),
    FitModelKind.COHERENT_VACUUM: ("T1",),
    FitModelKind.RAMSEY_FRINGE: ("T2",),
}


class FitError(RuntimeError):
    pass


class FlatDataError(FitError, ValueError):
    pass


@dataclass
class FitResult:
    kind: FitModelKind
    params: dict
    stderr: dict
    rss: float
    converged: bool
    iterations: int
    grad_norm: float = math.nan
    message: str = ""
    starts: int = 1

    def as_dict(self) -> dict:
        return {
            "model": self.kind.value,
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "rss": self.rss,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "message": self.message,
            "starts": self.starts,
        }


def _kind(kind) -> FitModelKind:
    return kind if isinstance(kind, FitModelKind) else FitModelKind(kind)


def _unpack(kind, params):
    names = PARAM_NAMES[kind]
    if isinstance(params, dict):
        return [float(params[n]) for n in names]
    vals = [float(v) for v in params]
    if len(vals) != len(names):
        raise ValueError(f"{kind.value} takes {len(names)} parameters, got {len(vals)}")
    return vals


def model_eval(kind, params, t) -> np.ndarray:
    """Evaluate a decay model.

    * ``single_exp``: ``A·exp(-t/T1) + C``
    * ``coherent_vacuum``: ``A·exp(-n0·exp(-t/T1)) + C``
    * ``ramsey_fringe``: ``A·exp(-t/T2)·cos(2π·delta·t + phi) + C``
    """
    kind = _kind(kind)
    t = np.asarray(t, dtype=float)
    p = _unpack(kind, params)
    if kind is FitModelKind.SINGLE_EXP:
        a, t1, c = p
        _check_positive(T1=t1)
        return a * np.exp(-t / t1) + c
    if kind is FitModelKind.COHERENT_VACUUM:
        a, n0, t1, c = p
        _check_positive(T1=t1)
        return a * np.exp(-n0 * np.exp(-t / t1)) + c
    a, t2, delta, phi, c = p
    _check_positive(T2=t2)
    return a * np.exp(-t / t2) * np.cos(2 * math.pi * delta * t + phi) + c


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0, got {v}")


def model_jacobian(kind, params, t) -> np.ndarray:
    """Analytic ``∂model/∂param`` with columns in ``PARAM_NAMES`` order."""
    kind = _kind(kind)
    t = np.asarray(t, dtype=float)
    p = _unpack(kind, params)
    if kind is FitModelKind.SINGLE_EXP:
        a, t1, c = p
        e = np.exp(-t / t1)
        return np.column_stack([e, a * e * t / t1**2, np.ones_like(t)])
    if kind is FitModelKind.COHERENT_VACUUM:
        a, n0, t1, c = p
        u = np.exp(-t / t1)
        g = np.exp(-n0 * u)
        return np.column_stack([g, -a * u * g, -a * g * n0 * u * t / t1**2, np.ones_like(t)])
    a, t2, delta, phi, c = p
    e = np.exp(-t / t2)
    psi = 2 * math.pi * delta * t + phi
    cos, sin = np.cos(psi), np.sin(psi)
    return np.column_stack(
        [e * cos, a * e * cos * t / t2**2, -a * e * sin * 2 * math.pi * t, -a * e * sin, np.ones_like(t)]
    )


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class _LMOutcome:
    x: np.ndarray
    rss: float
    converged: bool
    iterations: int
    grad_norm: float
    message: str


def levenberg_marquardt(
    fun,
    x0,
    max_iter: int = 500,
    rtol_rss: float = 1e-12,
    gtol: float = 1e-10,
    lam0: float = 1e-3,
) -> _LMOutcome:
    """Damped Gauss-Newton with Marquardt's diagonal scaling.

    ``fun(x)`` returns ``(residuals, jacobian)``. Converges when an accepted
    step lowers the RSS by less than ``rtol_rss`` relative, or when the
    gradient ``J^T r`` has infinity norm below ``gtol``.
    """
    x = np.array(x0, dtype=float)
    r, J = fun(x)
    rss = float(r @ r)
    lam = lam0
    it = 0
    grad = J.T @ r
    while it < max_iter:
        it += 1
        grad = J.T @ r
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < gtol:
            return _LMOutcome(x, rss, True, it, gnorm, "gradient below tolerance")
        JtJ = J.T @ J
        diag = np.maximum(np.diag(JtJ), 1e-30)
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = x + step
            try:
                r_new, J_new = fun(x_new)
            except (ValueError, FloatingPointError):
                lam *= 10
                continue
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new < rss:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no downhill step at any damping: stationary up to rounding
            scaled = np.max(np.abs(grad) / np.sqrt(diag * max(rss, 1e-300)))
            ok = bool(scaled < 1e-6)
            return _LMOutcome(x, rss, ok, it, gnorm, "stalled" + (" at stationary point" if ok else ""))
        rel = (rss - rss_new) / rss if rss > 0 else 0.0
        x, r, J, rss = x_new, r_new, J_new, rss_new
        lam = max(lam / 10, 1e-12)
        if rel < rtol_rss:
            return _LMOutcome(x, rss, True, it, float(np.max(np.abs(J.T @ r))), "relative RSS change below tolerance")
    return _LMOutcome(x, rss, False, it, float(np.max(np.abs(J.T @ r))), "maximum iterations reached")


# ---------------------------------------------------------------------------
# Initial guesses
# ---------------------------------------------------------------------------


def _data(dataset):
    t = np.asarray(dataset.sweep_values, dtype=float)
    y = np.asarray(dataset.observed, dtype=float)
    order = np.argsort(t)
    return t[order], y[order]


def _check_flat(y):
    if y.size == 0:
        raise ValueError("empty dataset")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise FlatDataError("data are constant; no decay to fit")


def _loglinear_rate(t, z):
    """Slope of ln z against t, using samples with z comfortably above zero."""
    z = np.asarray(z, dtype=float)
    keep = z > 0.05 * np.max(z)
    if keep.sum() < 2:
        keep = z > 0
    if keep.sum() < 2:
        return None
    slope = np.polyfit(t[keep], np.log(z[keep]), 1)[0]
    return -slope if slope < 0 else None


def _tail_head(y):
    k = max(2, y.size // 5)
    return float(np.mean(y[-k:])), float(y[0])


def auto_guess(kind, dataset) -> dict:
    """Heuristic starting parameters for :func:`fit`.

    Raises:
        FlatDataError: the trace is constant.
    """
    kind = _kind(kind)
    t, y = _data(dataset)
    _check_flat(y)
    span = float(t[-1] - t[0]) or 1.0
    if kind is FitModelKind.SINGLE_EXP:
        c, head = _tail_head(y)
        a = head - c
        rate = _loglinear_rate(t - t[0], np.sign(a) * (y - c))
        t1 = 1.0 / rate if rate else span / 3
        return {"A": a, "T1": t1, "C": c}
    if kind is FitModelKind.COHERENT_VACUUM:
        tail, head = _tail_head(y)
        best = None
        for n0 in (0.5, 1.0, 2.0, 3.0, 4.0):
            a = (tail - head) / (1 - math.exp(-n0))
            c = tail - a
            ratio = (y - c) / a
            ok = (ratio > 1e-9) & (ratio < 1 - 1e-9)
            if ok.sum() < 2:
                continue
            z = -np.log(ratio[ok])
            rate = _loglinear_rate(t[ok] - t[0], z)
            t1 = 1.0 / rate if rate else span / 3
            guess = {"A": a, "n0": n0 * math.exp(t[0] / t1), "T1": t1, "C": c}
            resid = float(np.sum((model_eval(kind, guess, t) - y) ** 2))
            if best is None or resid < best[0]:
                best = (resid, guess)
        if best is None:
            return {"A": tail - head, "n0": 2.0, "T1": span / 3, "C": head}
        return best[1]
    # ramsey fringe
    c = float(np.mean(y))
    yc = y - c
    n = t.size
    dt_min = float(np.min(np.diff(t))) if n > 1 else span
    f_max = 0.5 / dt_min
    df = 1.0 / (span * n / max(n - 1, 1))
    freqs = np.arange(1, int(f_max / df * 8) + 1) * (df / 8)
    spectrum = np.exp(-2j * math.pi * np.outer(freqs, t)) @ yc
    k = int(np.argmax(np.abs(spectrum)))
    delta = float(freqs[k])
    phi = float(np.angle(spectrum[k]))
    # envelope: max |y - C| over windows one period long
    period = 1.0 / delta
    edges = np.arange(t[0], t[-1] + period, period)
    tc, env = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (t >= lo) & (t < hi)
        if sel.any():
            j = np.argmax(np.abs(yc[sel]))
            tc.append(t[sel][j])
            env.append(abs(yc[sel][j]))
    tc, env = np.array(tc), np.array(env)
    rate = _loglinear_rate(tc - t[0], env) if tc.size >= 2 else None
    t2 = 1.0 / rate if rate else span
    a = float(env[0] * math.exp((tc[0] - t[0]) / t2)) if env.size else float(np.ptp(y) / 2)
    return {"A": a, "T2": t2, "delta": delta, "phi": phi, "C": c}


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _to_internal(kind, params):
    vals = _unpack(kind, params)
    names = PARAM_NAMES[kind]
    return np.array([math.log(v) if n in _LOG_PARAMS[kind] else v for n, v in zip(names, vals)])


def _to_natural(kind, x):
    names = PARAM_NAMES[kind]
    return np.array([math.exp(v) if n in _LOG_PARAMS[kind] else v for n, v in zip(names, x)])


def _shot_weights(dataset):
    p = np.clip(np.asarray(dataset.trace if dataset.shot_fraction is None else dataset.shot_fraction), 1e-4, 1 - 1e-4)
    shots = dataset.shots_per_point or 1
    return np.sqrt(shots / (p * (1 - p)))


def fit(kind, dataset, guess: dict | None = None, weighting: str = "none", max_iter: int = 500) -> FitResult:
    """Fit ``kind`` to a dataset by Levenberg-Marquardt.

    Args:
        kind: A :class:`FitModelKind` or its string value.
        dataset: Anything with ``sweep_values`` and ``observed``.
        guess: Starting parameters; :func:`auto_guess` if omitted.
        weighting: ``"none"`` or ``"shot"`` (binomial variance weights).

    If the first start fails the fit is retried from two rescaled starts.
    """
    kind = _kind(kind)
    names = PARAM_NAMES[kind]
    t, y = _data(dataset)
    k = len(names)
    if t.size < 2 * k:
        raise FitError(f"{kind.value} needs at least {2 * k} points, got {t.size}")
    _check_flat(y)
    if weighting == "shot":
        w = _shot_weights(dataset)[np.argsort(dataset.sweep_values)]
    elif weighting == "none":
        w = np.ones_like(y)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    log_cols = [i for i, n in enumerate(names) if n in _LOG_PARAMS[kind]]

    def fun(x):
        nat = _to_natural(kind, x)
        with np.errstate(over="raise", invalid="raise"):
            r = (model_eval(kind, nat, t) - y) * w
            J = model_jacobian(kind, nat, t) * w[:, None]
        J[:, log_cols] *= nat[log_cols]
        return r, J

    start = dict(guess) if guess is not None else auto_guess(kind, dataset)
    tname = "T2" if kind is FitModelKind.RAMSEY_FRINGE else "T1"
    starts = [start, {**start, tname: start[tname] * 0.5}, {**start, tname: start[tname] * 2.0}]
    best = None
    for n_start, s in enumerate(starts, 1):
        out = levenberg_marquardt(fun, _to_internal(kind, s), max_iter=max_iter)
        if best is None or (out.converged, -out.rss) > (best.converged, -best.rss):
            best = out
        if out.converged:
            break
    nat = _to_natural(kind, best.x)
    J = model_jacobian(kind, nat, t) * w[:, None]
    dof = t.size - k
    stderr = np.full(k, math.inf)
    message = best.message
    converged = best.converged
    try:
        jtj = J.T @ J
        if np.linalg.cond(jtj) > 1e15:
            raise np.linalg.LinAlgError("singular normal equations")
        cov = np.linalg.inv(jtj) * best.rss / dof
        stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError as exc:
        converged = False
        message = f"{message}; {exc}"
    params = dict(zip(names, map(float, nat)))
    if kind is FitModelKind.RAMSEY_FRINGE:
        # canonical form: A > 0, delta > 0, phi in (-pi, pi]
        if params["delta"] < 0:
            params["delta"], params["phi"] = -params["delta"], -params["phi"]
        if params["A"] < 0:
            params["A"], params["phi"] = -params["A"], params["phi"] + math.pi
        params["phi"] = math.atan2(math.sin(params["phi"]), math.cos(params["phi"]))
    return FitResult(
        kind=kind,
        params=params,
        stderr=dict(zip(names, map(float, stderr))),
        rss=float(np.sum(((model_eval(kind, params, t) - y)) ** 2)),
        converged=converged,
        iterations=best.iterations,
        grad_norm=best.grad_norm,
        message=message,
        starts=n_start,
    )


# ---------------------------------------------------------------------------
# SNAP recipe calibration
# ---------------------------------------------------------------------------


def _recipe_state(recipe: dict, n_cav: int) -> np.ndarray:
    from .dynamics import _displacement_cavity

    psi = np.zeros(n_cav, dtype=complex)
    psi[0] = 1.0
    disp = recipe["displacements"]
    psi = _displacement_cavity(complex(disp[0]), n_cav) @ psi
    for phases, beta in zip(recipe["snap_phases"], disp[1:]):
        theta = np.zeros(n_cav)
        theta[: len(phases)] = phases
        psi = np.exp(1j * theta) * psi
        psi = _displacement_cavity(complex(beta), n_cav) @ psi
    return psi


def _target_vector(target, n_cav: int) -> np.ndarray:
    if isinstance(target, str):
        vec = np.zeros(n_cav, dtype=complex)
        if target == "fock1":
            vec[1] = 1.0
        elif target == "superposition":
            vec[:2] = 1 / math.sqrt(2)
        elif target == "vacuum":
            vec[0] = 1.0
        else:
            raise ValueError(f"unknown target {target!r}")
        return vec
    vec = np.zeros(n_cav, dtype=complex)
    t = np.asarray(target, dtype=complex)
    vec[: t.size] = t
    return vec / np.linalg.norm(vec)


def recipe_fidelity(recipe: dict, target="fock1", n_cav: int = 20) -> float:
    """``|⟨target|D·S·…·D|0⟩|²`` for a Displace/SNAP recipe on the bare cavity."""
    psi = _recipe_state(recipe, n_cav)
    return float(abs(np.vdot(_target_vector(target, n_cav), psi)) ** 2)


def _pack_recipe(x, n_snap, n_phases):
    disp = tuple(float(v) for v in x[: n_snap + 1])
    ph = x[n_snap + 1 :].reshape(n_snap, n_phases)
    return {"displacements": disp, "snap_phases": tuple(tuple(float(v) for v in row) for row in ph)}


def calibrate_snap_recipe(
    dims=None,
    target="fock1",
    n_snap: int | None = None,
    n_phases: int = 2,
    threshold: float = 0.99,
    max_evals: int = 2000,
    seed: int = 0,
) -> dict:
    """Nelder-Mead search for a Displace/SNAP recipe preparing ``target`` from vacuum.

    Displacements are real: a common rotation of all displacement phases
    only rotates the output state, so it carries no freedom. Starts are
    drawn from a seeded generator until ``threshold`` is met or the
    evaluation budget is spent.

    Returns:
        dict with ``displacements``, ``snap_phases``, ``fidelity`` and
        ``evaluations``.

    Raises:
        FitError: ``threshold`` not reached within ``max_evals``.
    """
    from scipy.optimize import minimize

    n_cav = dims.n_cav if dims is not None else 20
    if n_snap is None:
        n_snap = 2 if target == "fock1" else 1
    n_par = n_snap + 1 + n_snap * n_phases
    rng = np.random.default_rng(seed)
    used = 0
    best = (-1.0, None)

    def objective(x):
        return -recipe_fidelity(_pack_recipe(x, n_snap, n_phases), target, n_cav)

    # screen random points, then refine the most promising ones
    n_screen = min(max_evals // 10, 200)
    pts = np.column_stack(
        [rng.uniform(-1.5, 1.5, (n_screen, n_snap + 1)), rng.uniform(-math.pi, math.pi, (n_screen, n_snap * n_phases))]
    )
    scores = np.array([objective(x) for x in pts])
    used += n_screen
    for x in pts[np.argsort(scores, kind="stable")]:
        if used >= max_evals or best[0] >= threshold:
            break
        # restarting from the end point re-expands a collapsed simplex
        for _ in range(2):
            budget = min(max_evals - used, 60 * n_par)
            if budget <= 0:
                break
            res = minimize(objective, x, method="Nelder-Mead", options={"maxfev": budget, "xatol": 1e-10, "fatol": 1e-14})
            used += res.nfev
            x = res.x
            if -res.fun > best[0]:
                best = (-res.fun, res.x)
    if best[0] >= threshold and used < max_evals:
        res = minimize(
            objective, best[1], method="Nelder-Mead",
            options={"maxfev": min(max_evals - used, 60 * n_par), "xatol": 1e-12, "fatol": 1e-15},
        )
        used += res.nfev
        if -res.fun > best[0]:
            best = (-res.fun, res.x)
    if best[0] < threshold:
        raise FitError(f"best fidelity {best[0]:.4f} < {threshold} after {used} evaluations")
    recipe = _pack_recipe(best[1], n_snap, n_phases)
    recipe.update(fidelity=best[0], evaluations=used)
    return recipe
