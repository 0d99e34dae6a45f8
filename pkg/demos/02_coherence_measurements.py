"""
Cavity T1 and T2 from simulated sweeps
======================================

Three sweeps on one storage cavity, each fitted with its own decay model.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from bosonic_twin import DeviceModel, HilbertDims, ReadoutModel, fit  # noqa: E402
from bosonic_twin.fitting import model_eval  # noqa: E402
from bosonic_twin.protocols import FIT_KIND, run_experiment, tphi_for_T2  # noqa: E402

cavity = DeviceModel(chi_over_2pi=500e3, cavity_T1=1.2e-3, cavity_Tphi=tphi_for_T2(1.2e-3, 0.8e-3))
readout = ReadoutModel(shots=5000, rng_seed=4)
dims = HilbertDims()

fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
for ax, kind in zip(axes, ("t1_fock", "t1_coherent", "t2_ramsey")):
    data = run_experiment(kind, cavity, dims, readout)
    res = fit(FIT_KIND[kind], data)
    print(kind, {k: f"{v:.4g}" for k, v in res.params.items()})
    t_ms = data.sweep_values * 1e3
    ax.plot(t_ms, data.observed, ".", ms=4)
    ax.plot(t_ms, model_eval(res.kind, res.params, data.sweep_values), "-")
    ax.set_title(kind)
    ax.set_xlabel("delay (ms)")
axes[0].set_ylabel("P(0 photons)")
fig.tight_layout()
fig.savefig("coherence_measurements.png", dpi=120)
print("expected T2:", 0.8e-3)
