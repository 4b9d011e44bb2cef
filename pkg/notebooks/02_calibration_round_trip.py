# %% [markdown]
# # Calibration round trip
#
# Synthesizes a noiseless data set from the planted machine, calibrates a
# bundle from it and compares predictions against the planted truth.  Then
# repeats with measurement noise.

# %%
from __future__ import annotations

from qenergy.calibration import measurement_budget
from qenergy.errors import CalibrationGapError
from qenergy.calibration.pipeline import calibrate
from qenergy.model import WorkloadPoint, predict_power_and_energy
from qenergy.synth import default_plant, synth_dataset

plant = default_plant()
records = synth_dataset(plant)
bundle = calibrate(records, plant.topology)
print(len(records), "records; impls:", bundle.impls)
print("queue-run budget for 8 pair counts, 6 pw values, 3 frequencies:", measurement_budget(8, 6, 3))


# %%
def worst_error(bundle, plant):
    worst, missing = 0.0, 0
    for impl in bundle.impls:
        for n in range(1, 9):
            for pw in (0.0, 300.0, 3000.0):
                point = WorkloadPoint(impl, n, 2.3, pw)
                try:
                    got = bundle.predict(point)
                except CalibrationGapError:
                    missing += 1
                    continue
                want = predict_power_and_energy(
                    point, plant.throughput_model(impl), plant.power_model(impl), plant.cas, plant.topology
                )
                worst = max(worst, abs(got.energy_per_op / want.energy_per_op - 1))
    return worst, missing


print("noiseless worst energy/op error, uncovered points:", worst_error(bundle, plant))

# %% [markdown]
# With noise the recovered frontier moves, and some congested lines no longer
# have two planned pw values below it.  Those cells are reported as gaps and
# are skipped here.

# %%
noisy = plant.with_noise(sigma=0.01)
noisy_bundle = calibrate(synth_dataset(noisy, seed=3), plant.topology)
print("1% noise worst energy/op error, uncovered points:", worst_error(noisy_bundle, plant))
for gap in noisy_bundle.gaps:
    print("gap:", gap)
