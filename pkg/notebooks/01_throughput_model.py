# %% [markdown]
# # Throughput and energy of a queue under a planted machine
#
# Sweeps the parallel work for one queue and shows where the congested and
# non-congested regimes meet.

# %%
from __future__ import annotations

import numpy as np

from qenergy.model import Regime, WorkloadPoint, frontier_pw, predict_power_and_energy
from qenergy.synth import default_plant

plant = default_plant()
impl, f = "a0", 2.3
tm, pm = plant.throughput_model(impl), plant.power_model(impl)

# %%
for n in (2, 4, 8):
    edge = frontier_pw(n, f, tm, plant.cas, plant.topology)
    print(f"n={n}: frontier at pw = {edge:8.1f}")

# %%
n = 4
for pw in np.linspace(0, 3 * frontier_pw(n, f, tm, plant.cas, plant.topology), 9):
    rep = predict_power_and_energy(WorkloadPoint(impl, n, f, float(pw)), tm, pm, plant.cas, plant.topology)
    tag = "C " if rep.regime is Regime.CONGESTED else "NC"
    print(f"pw {pw:8.1f} {tag} {rep.throughput:12.1f} ops/s {rep.breakdown.total:7.2f} W {rep.energy_per_op:.3e} J/op")

# %% [markdown]
# Power split by kind and component at one point.

# %%
rep = predict_power_and_energy(WorkloadPoint(impl, 8, 3.4, 500.0), tm, pm, plant.cas, plant.topology)
for key, watts in rep.breakdown.as_dict().items():
    print(f"{key:>18}: {watts:.3f} W")
