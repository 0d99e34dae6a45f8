import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonic_twin.dynamics import (
    FOCK1_RECIPE,
    SUPERPOSITION_RECIPE,
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
    gate_unitary,
    run_sequence,
    snap_prepare_fock1,
    snap_prepare_superposition,
)
from bosonic_twin.hilbert import (
    HilbertDims,
    QuantumState,
    annihilation_operator,
    coherent_state,
    expectation,
    fidelity,
    fock_state,
    number_operator,
    pure_state,
    qubit_projector,
)
from bosonic_twin.measurement import ReadoutModel

LONG = 1e6  # seconds; effectively no dissipation


def closed_model(chi=500e3):
    return DeviceModel(chi_over_2pi=chi, cavity_T1=LONG, transmon_T1=LONG)


def superposition_excited(dims):
    """(|0⟩+|1⟩)/√2 ⊗ |e⟩."""
    psi = np.zeros(dims.dim, complex)
    psi[0 * dims.n_qubit + 1] = psi[1 * dims.n_qubit + 1] = 1 / math.sqrt(2)
    return QuantumState(dims, np.outer(psi, psi.conj()))


def test_hamiltonian_is_diagonal_and_hermitian(dims):
    h = dispersive_hamiltonian(DeviceModel(), dims)
    np.testing.assert_array_equal(h, np.diag(np.diag(h)))
    assert h[dims.n_qubit * 3 + 1, dims.n_qubit * 3 + 1] == pytest.approx(-2 * math.pi * 500e3 * 3)


def test_collapse_operators_skip_zero_rates(dims):
    assert len(collapse_operators(DeviceModel(), dims)) == 2
    full = DeviceModel(nbar_th=0.1, cavity_Tphi=1e-3, transmon_Pe_th=0.05, transmon_Tphi=50e-6)
    assert len(collapse_operators(full, dims)) == 6


def test_dispersive_phase_flip_at_half_period(small_dims):
    chi = 500e3
    state = superposition_excited(small_dims)
    out = evolve(state, closed_model(chi), 1 / (2 * chi))
    i0, i1 = 1, small_dims.n_qubit + 1
    assert out.rho[i0, i1] / state.rho[i0, i1] == pytest.approx(-1, abs=1e-6)


def test_qubit_ground_sees_no_dispersive_phase(small_dims):
    state = pure_state([1, 1], small_dims)
    out = evolve(state, closed_model(), 0.37e-6)
    np.testing.assert_allclose(out.rho, state.rho, atol=1e-9)


def test_fock1_decays_to_e_inverse_after_T1(dims, ideal_model):
    out = evolve(fock_state(1, dims), ideal_model, ideal_model.cavity_T1)
    assert np.real(expectation(out, number_operator(dims))) == pytest.approx(math.exp(-1), abs=1e-6)


def test_coherent_mean_photon_decay(dims, ideal_model):
    state = coherent_state(math.sqrt(2), dims)
    n0 = np.real(expectation(state, number_operator(dims)))
    for t in (0.3e-3, 1.4e-3, 4e-3):
        out = evolve(state, ideal_model, t)
        expected = n0 * math.exp(-t / ideal_model.cavity_T1)
        assert np.real(expectation(out, number_operator(dims))) == pytest.approx(expected, rel=1e-6)


def test_thermal_cavity_steady_state():
    dims = HilbertDims(n_cav=15)
    m = DeviceModel(cavity_T1=1e-3, nbar_th=0.05)
    out = evolve(fock_state(0, dims), m, 30e-3)
    assert np.real(expectation(out, number_operator(dims))) == pytest.approx(0.05, abs=1e-6)
    p = np.real(np.diag(out.cavity_rho()))
    np.testing.assert_allclose(p[:4], (1 / 1.05) * (0.05 / 1.05) ** np.arange(4), atol=1e-8)


def test_transmon_thermal_steady_state(small_dims):
    m = DeviceModel(transmon_T1=30e-6, transmon_Pe_th=0.05, cavity_T1=LONG)
    out = evolve(fock_state(0, small_dims), m, 30 * 30e-6)
    assert np.real(expectation(out, qubit_projector(1, small_dims))) == pytest.approx(0.05, abs=1e-6)


def test_trace_and_positivity_preserved(dims):
    m = DeviceModel(nbar_th=0.08, cavity_Tphi=2e-3, transmon_Pe_th=0.05, transmon_Tphi=40e-6)
    state = coherent_state(1.2, dims)
    for t in (1e-7, 1e-5, 1e-3, 1e-2):
        out = evolve(state, m, t)
        assert abs(np.trace(out.rho) - 1) < 1e-10
        assert np.linalg.eigvalsh(out.rho).min() > -1e-10


def test_semigroup_property(dims):
    m = DeviceModel(nbar_th=0.05, cavity_Tphi=3e-3, transmon_Pe_th=0.02)
    state = coherent_state(1 + 0.5j, dims)
    a = evolve(evolve(state, m, 0.2e-3), m, 0.5e-3)
    b = evolve(state, m, 0.7e-3)
    np.testing.assert_allclose(a.rho, b.rho, atol=1e-7)


def test_zero_duration_is_identity(dims):
    s = coherent_state(1, dims)
    assert evolve(s, DeviceModel(), 0.0) is s
    with pytest.raises(ValueError):
        evolve(s, DeviceModel(), -1.0)


def test_rk45_matches_exact_with_dispersive_coupling():
    dims = HilbertDims(n_cav=8)
    m = DeviceModel(chi_over_2pi=500e3, cavity_T1=50e-6, transmon_T1=5e-6, transmon_Pe_th=0.03, nbar_th=0.05)
    psi = np.zeros(dims.dim, complex)
    psi[[0, 1, 3, 4]] = [0.5, 0.5, 0.5, 0.5j]
    state = QuantumState(dims, np.outer(psi, psi.conj()))
    for t in (0.3e-6, 2e-6):
        ex = evolve(state, m, t)
        rk = evolve(state, m, t, method="rk45")
        np.testing.assert_allclose(rk.rho, ex.rho, atol=1e-8)


def test_rk45_step_underflow_raises(small_dims):
    with pytest.raises(IntegrationError) as info:
        evolve(coherent_state(1, small_dims), DeviceModel(), 1e-3, method="rk45", rtol=1e-30, atol=1e-300)
    assert info.value.time_reached >= 0


def test_unknown_method(dims):
    with pytest.raises(ValueError):
        evolve(fock_state(0, dims), DeviceModel(), 1e-6, method="euler")


def test_snap_commutes_with_hamiltonian(dims):
    h = dispersive_hamiltonian(DeviceModel(), dims)
    rng = np.random.default_rng(7)
    s = gate_unitary(Snap(rng.uniform(-math.pi, math.pi, dims.n_cav)), dims)
    assert np.max(np.abs(s @ h - h @ s)) < 1e-10


def test_displacement_on_vacuum_is_coherent():
    dims = HilbertDims(n_cav=30)
    out = apply_gate(fock_state(0, dims), Displace(1.1 - 0.4j))
    assert fidelity(out, coherent_state(1.1 - 0.4j, dims)) == pytest.approx(1, abs=1e-10)


def test_displacement_composition():
    dims = HilbertDims(n_cav=40)
    d = lambda a: gate_unitary(Displace(a), dims)  # noqa: E731
    vac = np.zeros(dims.dim)
    vac[0] = 1
    a, b = 0.7 + 0.2j, -0.3 + 0.5j
    lhs = d(a) @ d(b) @ vac
    rhs = np.exp(0.5 * (a * np.conj(b) - np.conj(a) * b)) * d(a + b) @ vac
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_transmon_pi_pulse_and_selective():
    dims = HilbertDims(n_cav=5)
    out = apply_gate(fock_state(0, dims), TransmonRotation(math.pi))
    assert np.real(expectation(out, qubit_projector(1, dims))) == pytest.approx(1)
    out = apply_gate(fock_state(1, dims), TransmonRotation(math.pi, selective=0))
    assert np.real(expectation(out, qubit_projector(1, dims))) == pytest.approx(0, abs=1e-15)


def test_wait_needs_model_and_sweep(dims):
    with pytest.raises(ValueError):
        apply_gate(fock_state(0, dims), Wait(1e-6))
    with pytest.raises(ValueError):
        apply_gate(fock_state(0, dims), Wait(), model=DeviceModel())


def test_snap_too_many_phases():
    dims = HilbertDims(n_cav=4)
    with pytest.raises(ValueError):
        gate_unitary(Snap([0.1] * 5), dims)


def test_detuned_displacement_needs_delay_sweep(dims):
    with pytest.raises(ValueError):
        gate_unitary(Displace(1.0, detuning=1e3), dims)


@pytest.mark.parametrize("n_cav", [20, 40])
def test_snap_recipes_reach_targets(n_cav):
    dims = HilbertDims(n_cav=n_cav)
    s = fock_state(0, dims)
    for step in snap_prepare_fock1():
        s = apply_gate(s, step)
    assert fidelity(s, fock_state(1, dims)) >= 0.99
    s = fock_state(0, dims)
    for step in snap_prepare_superposition():
        s = apply_gate(s, step)
    assert fidelity(s, pure_state([1, 1], dims)) >= 0.99


def test_recipe_constants_have_expected_shape():
    assert len(FOCK1_RECIPE["displacements"]) == len(FOCK1_RECIPE["snap_phases"]) + 1
    assert len(SUPERPOSITION_RECIPE["displacements"]) == len(SUPERPOSITION_RECIPE["snap_phases"]) + 1


@pytest.mark.parametrize(
    "values, name",
    [([], "delay"), ([0, 2, 1], "delay"), ([0, 0], "delay"), ([-1, 0], "delay"), ([0, 1], "frequency")],
)
def test_pulse_sequence_validation(values, name):
    with pytest.raises(ValueError):
        PulseSequence([Wait()], name, values)


def test_pulse_sequence_rejects_negative_wait():
    with pytest.raises(ValueError):
        PulseSequence([Wait(-1.0)], "delay", [0.0])


def test_t1_fock_trace_matches_closed_form(ideal_model):
    dims = HilbertDims()
    t = np.linspace(0, 5e-3, 11)
    seq = PulseSequence([*snap_prepare_fock1(), Wait(), MeasureSelective(0)], "delay", t)
    ro = ReadoutModel(contrast=0.9, baseline=0.05)
    ds = run_sequence(seq, ideal_model, dims, ro)
    expected = 0.05 + 0.9 * (1 - np.exp(-t / ideal_model.cavity_T1))
    np.testing.assert_allclose(ds.trace, expected, atol=1e-9)


def test_sweep_points_are_order_independent(ideal_model, monkeypatch):
    dims = HilbertDims(n_cav=12)
    seq_up = PulseSequence([Displace(1.0), Wait(), MeasureSelective(0)], "delay", [0, 1e-4, 1e-3, 2e-3])
    seq_down = PulseSequence([Displace(1.0), Wait(), MeasureSelective(0)], "delay", [2e-3, 1e-3, 1e-4, 0])
    up = run_sequence(seq_up, ideal_model, dims, ReadoutModel())
    down = run_sequence(seq_down, ideal_model, dims, ReadoutModel())
    np.testing.assert_array_equal(up.trace, down.trace[::-1])
    monkeypatch.setenv("BOSONIC_TWIN_THREADS", "3")
    threaded = run_sequence(seq_up, ideal_model, dims, ReadoutModel())
    np.testing.assert_array_equal(up.trace, threaded.trace)


def test_phase_sweep_displacement():
    dims = HilbertDims(n_cav=16)
    phases = np.linspace(0, 2 * math.pi, 9)
    seq = PulseSequence([Displace(0.5), Displace(0.5, sweep_phase=True), MeasureSelective(0)], "phase", phases)
    ds = run_sequence(seq, DeviceModel(), dims, ReadoutModel())
    # net amplitude 0.5(1 + e^{iφ}); vacuum population exp(-|β|²)
    expected = np.exp(-np.abs(0.5 * (1 + np.exp(1j * phases))) ** 2)
    np.testing.assert_allclose(ds.trace, expected, atol=1e-9)


@given(
    st.floats(100e-6, 3e-3),
    st.floats(0, 0.1),
    st.floats(15e-6, 51e-6),
    st.floats(0, 0.05),
    st.floats(1e-6, 2e-3),
)
@settings(max_examples=15, deadline=None)
def test_evolution_is_completely_positive_trace_preserving(t1, nbar, qt1, pe, t):
    dims = HilbertDims(n_cav=8)
    m = DeviceModel(cavity_T1=t1, nbar_th=nbar, transmon_T1=qt1, transmon_Pe_th=pe)
    out = evolve(coherent_state(0.8, dims), m, t)
    assert abs(np.trace(out.rho).real - 1) < 1e-10
    assert np.linalg.eigvalsh(out.rho).min() > -1e-9


def test_annihilation_lindblad_oracle_single_mode():
    """Exact propagator against expm of a hand-built Liouvillian (column vec)."""
    dims = HilbertDims(n_cav=4)
    m = DeviceModel(chi_over_2pi=200e3, cavity_T1=2e-6, transmon_T1=1e-6, nbar_th=0.1)
    h = dispersive_hamiltonian(m, dims)
    cops = collapse_operators(m, dims)
    eye = np.eye(dims.dim)
    L = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in cops:
        cdc = c.conj().T @ c
        L += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    state = pure_state([1, 1, 1j], dims)
    t = 1.3e-6
    vec = state.rho.reshape(-1, order="F")
    expected = (scipy.linalg.expm(L * t) @ vec).reshape(dims.dim, dims.dim, order="F")
    np.testing.assert_allclose(evolve(state, m, t).rho, expected, atol=1e-10)
