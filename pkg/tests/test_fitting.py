import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonic_twin.dynamics import DeviceModel
from bosonic_twin.fitting import (
    PARAM_NAMES,
    FitError,
    FitModelKind,
    FlatDataError,
    auto_guess,
    calibrate_snap_recipe,
    fit,
    model_eval,
    model_jacobian,
    recipe_fidelity,
)
from bosonic_twin.hilbert import HilbertDims
from bosonic_twin.measurement import Dataset, ReadoutModel
from bosonic_twin.protocols import run_experiment, tphi_for_T2

SE, CV, RF = FitModelKind.SINGLE_EXP, FitModelKind.COHERENT_VACUUM, FitModelKind.RAMSEY_FRINGE
T = np.linspace(0, 7e-3, 41)


def dataset(kind, params, t=T):
    return Dataset("delay", t, np.clip(model_eval(kind, params, t), 0, 1))


def random_params(kind, rng):
    if kind is SE:
        a = rng.uniform(-0.9, 0.9)
        return {"A": a, "T1": rng.uniform(0.2e-3, 3e-3), "C": max(0.0, -a) + rng.uniform(0, 0.05)}
    if kind is CV:
        return {"A": rng.uniform(0.2, 0.9), "n0": rng.uniform(0.2, 4), "T1": rng.uniform(0.2e-3, 3e-3), "C": rng.uniform(0, 0.1)}
    return {
        "A": rng.uniform(0.05, 0.4),
        "T2": rng.uniform(0.2e-3, 3e-3),
        "delta": rng.uniform(500, 5000),
        "phi": rng.uniform(-3, 3),
        "C": rng.uniform(0.3, 0.6),
    }


def test_model_values():
    assert model_eval(SE, {"A": 1, "T1": 1, "C": 0}, [0, 1]).tolist() == pytest.approx([1, math.exp(-1)])
    assert model_eval(CV, {"A": 1, "n0": 2, "T1": 1, "C": 0}, [0])[0] == pytest.approx(math.exp(-2))
    assert model_eval(RF, {"A": 1, "T2": 1, "delta": 0.25, "phi": 0, "C": 0}, [1])[0] == pytest.approx(0, abs=1e-15)


def test_model_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        model_eval(SE, {"A": 1, "T1": 0, "C": 0}, T)
    with pytest.raises(ValueError):
        model_eval(SE, [1, 2], T)


@pytest.mark.parametrize("kind", list(FitModelKind))
def test_jacobian_against_central_differences(kind):
    rng = np.random.default_rng(42)
    for _ in range(25):
        p = random_params(kind, rng)
        J = model_jacobian(kind, p, T)
        for j, name in enumerate(PARAM_NAMES[kind]):
            h = 1e-6 * max(abs(p[name]), 1e-3)
            up = model_eval(kind, {**p, name: p[name] + h}, T)
            dn = model_eval(kind, {**p, name: p[name] - h}, T)
            fd = (up - dn) / (2 * h)
            scale = max(np.max(np.abs(fd)), 1e-12)
            assert np.max(np.abs(J[:, j] - fd)) / scale < 1e-5, name


@pytest.mark.parametrize("kind", list(FitModelKind))
def test_noiseless_round_trip(kind):
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = random_params(kind, rng)
        t = np.linspace(0, 3 * p.get("T1", p.get("T2")), 81)
        res = fit(kind, dataset(kind, p, t))
        assert res.converged, res.message
        for name in PARAM_NAMES[kind]:
            if kind is RF and name == "phi":
                assert math.remainder(res.params[name] - p[name], 2 * math.pi) == pytest.approx(0, abs=1e-6)
            else:
                assert res.params[name] == pytest.approx(p[name], rel=1e-6, abs=1e-9)


def test_auto_guess_within_twenty_percent():
    t = np.linspace(0, 5e-3, 41)
    p = {"A": -0.9, "T1": 1.4e-3, "C": 0.95}
    assert auto_guess(SE, dataset(SE, p, t))["T1"] == pytest.approx(1.4e-3, rel=0.2)
    p = {"A": 1.0, "n0": 2.0, "T1": 1.4e-3, "C": 0.0}
    assert auto_guess(CV, dataset(CV, p, t))["T1"] == pytest.approx(1.4e-3, rel=0.2)


def test_ramsey_guess_detuning_within_one_bin():
    t = np.linspace(0, 1e-3, 101)
    p = {"A": 0.3, "T2": 0.8e-3, "delta": 10e3, "phi": 0.4, "C": 0.5}
    g = auto_guess(RF, dataset(RF, p, t))
    assert abs(g["delta"] - 10e3) <= 1e3


def test_ramsey_canonical_sign():
    t = np.linspace(0, 2e-3, 81)
    p = {"A": -0.3, "T2": 1e-3, "delta": 3e3, "phi": 0.2, "C": 0.5}
    res = fit(RF, dataset(RF, p, t))
    assert res.params["A"] > 0 and res.params["delta"] > 0
    assert -math.pi < res.params["phi"] <= math.pi
    np.testing.assert_allclose(model_eval(RF, res.params, t), model_eval(RF, p, t), atol=1e-9)


def test_flat_data_rejected():
    with pytest.raises(FlatDataError):
        fit(SE, Dataset("delay", T, np.full(T.size, 0.4)))
    with pytest.raises(FlatDataError):
        auto_guess(RF, Dataset("delay", T, np.full(T.size, 0.4)))


def test_too_few_points():
    t = np.linspace(0, 1e-3, 5)
    with pytest.raises(FitError):
        fit(SE, dataset(SE, {"A": 1, "T1": 1e-3, "C": 0}, t))


def test_unknown_weighting():
    with pytest.raises(ValueError):
        fit(SE, dataset(SE, {"A": 1, "T1": 1e-3, "C": 0}), weighting="cubic")


def test_stderr_scales_with_noise():
    rng = np.random.default_rng(0)
    p = {"A": -0.9, "T1": 1.4e-3, "C": 0.95}
    y0 = model_eval(SE, p, T)
    errs = []
    for sigma in (0.002, 0.02):
        y = np.clip(y0 + rng.normal(0, sigma, T.size), 0, 1)
        errs.append(fit(SE, Dataset("delay", T, y)).stderr["T1"])
    assert 3 < errs[1] / errs[0] < 30


def test_t1_monte_carlo_percentile():
    """Binomial-noise fits of a single exponential: 95th percentile error under 2 %."""
    t = np.linspace(0, 7e-3, 41)
    p_true = 1 - np.exp(-t / 1.4e-3)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = rng.binomial(10_000, p_true) / 10_000
        res = fit(SE, Dataset("delay", t, y))
        errs.append(abs(res.params["T1"] / 1.4e-3 - 1))
    assert np.percentile(errs, 95) < 0.02


def test_shot_weighting_runs():
    t = np.linspace(0, 7e-3, 41)
    rng = np.random.default_rng(2)
    p = 1 - np.exp(-t / 1.4e-3)
    y = rng.binomial(2000, p) / 2000
    ds = Dataset("delay", t, p, shot_fraction=y, shots_per_point=2000)
    res = fit(SE, ds, weighting="shot")
    assert res.params["T1"] == pytest.approx(1.4e-3, rel=0.05)


@given(st.floats(0.3e-3, 3e-3), st.floats(0.5, 0.95), st.floats(0.0, 0.05))
@settings(max_examples=25, deadline=None)
def test_single_exp_recovers_any_T1(t1, a, c):
    t = np.linspace(0, 5 * t1, 41)
    res = fit(SE, dataset(SE, {"A": -a, "T1": t1, "C": c + a}, t))
    assert res.params["T1"] == pytest.approx(t1, rel=1e-6)


def test_fit_result_as_dict():
    res = fit(SE, dataset(SE, {"A": 1, "T1": 1e-3, "C": 0}))
    d = res.as_dict()
    assert d["model"] == "single_exp" and set(d["params"]) == {"A", "T1", "C"}


# --- simulated experiments -------------------------------------------------


def test_fock_and_coherent_T1_agree(ideal_model):
    dims = HilbertDims()
    t1f = fit(SE, run_experiment("t1_fock", ideal_model, dims)).params["T1"]
    t1c = fit(CV, run_experiment("t1_coherent", ideal_model, dims)).params["T1"]
    assert t1f == pytest.approx(1.4e-3, rel=1e-4)
    assert abs(t1f / t1c - 1) < 0.05


def test_ramsey_T2_without_dephasing_is_twice_T1():
    m = DeviceModel(cavity_T1=1.2e-3, transmon_Pe_th=0.0)
    res = fit(RF, run_experiment("t2_ramsey", m))
    assert res.params["T2"] == pytest.approx(2.4e-3, rel=0.05)


def test_ramsey_T2_with_dephasing():
    m = DeviceModel(cavity_T1=1.2e-3, cavity_Tphi=tphi_for_T2(1.2e-3, 0.2e-3))
    res = fit(RF, run_experiment("t2_ramsey", m))
    assert res.params["T2"] == pytest.approx(0.2e-3, rel=0.05)


def test_tphi_for_T2_limits():
    with pytest.raises(ValueError):
        tphi_for_T2(1e-3, 2.5e-3)


# --- SNAP calibration ------------------------------------------------------


@pytest.mark.parametrize("target", ["fock1", "superposition"])
def test_calibration_reaches_threshold(target):
    rec = calibrate_snap_recipe(target=target, seed=0)
    assert rec["fidelity"] >= 0.99
    assert recipe_fidelity(rec, target) == pytest.approx(rec["fidelity"], abs=1e-12)
    assert rec["evaluations"] <= 2000


def test_calibration_failure_raises():
    with pytest.raises(FitError):
        calibrate_snap_recipe(target="fock1", n_snap=1, threshold=0.999, max_evals=300)


def test_recipe_fidelity_vacuum_trivial():
    rec = {"displacements": (0.0,), "snap_phases": ()}
    assert recipe_fidelity(rec, "vacuum") == pytest.approx(1)
    assert recipe_fidelity(rec, "fock1") == pytest.approx(0)
    with pytest.raises(ValueError):
        recipe_fidelity(rec, "cat")


def test_recipe_fidelity_custom_target():
    rec = {"displacements": (0.5,), "snap_phases": ()}
    n = np.arange(10)
    from scipy.special import factorial

    coh = np.exp(-0.125) * 0.5**n / np.sqrt(factorial(n))
    assert recipe_fidelity(rec, coh) == pytest.approx(1, abs=1e-9)
