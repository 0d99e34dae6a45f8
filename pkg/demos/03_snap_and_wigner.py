"""
SNAP state preparation and Wigner maps
======================================

"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from bosonic_twin import HilbertDims, apply_gate, fock_state, wigner  # noqa: E402
from bosonic_twin.dynamics import snap_prepare_fock1, snap_prepare_superposition  # noqa: E402
from bosonic_twin.fitting import calibrate_snap_recipe  # noqa: E402
from bosonic_twin.hilbert import fidelity, pure_state  # noqa: E402

# a fresh calibration from a seeded search
recipe = calibrate_snap_recipe(target="superposition", seed=3)
print("calibrated:", recipe["displacements"], recipe["snap_phases"], f"F = {recipe['fidelity']:.5f}")

dims = HilbertDims(n_cav=25)  # the +-2.5 grid needs n_cav >= 25


def prepare(steps):
    state = fock_state(0, dims)
    for step in steps:
        state = apply_gate(state, step)
    return state


one = prepare(snap_prepare_fock1())
sup = prepare(snap_prepare_superposition())
print("F(|1>) =", fidelity(one, fock_state(1, dims)))
print("F(sup) =", fidelity(sup, pure_state([1, 1], dims)))

fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
for ax, (label, state) in zip(axes, [("vacuum", fock_state(0, dims)), ("SNAP |1>", one), ("SNAP |0>+|1>", sup)]):
    g = wigner(state)
    ax.pcolormesh(g.re, g.im, g.values, cmap="RdBu_r", vmin=-2 / np.pi, vmax=2 / np.pi, shading="auto")
    ax.set_title(f"{label}\nintegral {g.integral():.4f}")
    ax.set_aspect("equal")
fig.tight_layout()
fig.savefig("wigner_maps.png", dpi=120)
