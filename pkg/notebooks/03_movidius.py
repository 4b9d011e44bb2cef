# %% [markdown]
# # SHAVE power on the Myriad1
#
# Evaluates the table model for unit mixes and fits it back from synthetic runs.

# %%
from __future__ import annotations

from qenergy.calibration import fit_movidius
from qenergy.constants import MOVIDIUS_BENCHMARKS, MOVIDIUS_EXTENDED_BENCHMARKS, MYRIAD1_P_ACT, MYRIAD1_P_STAT, MYRIAD1_UNITS
from qenergy.model import MovidiusModel, movidius_power
from qenergy.synth import movidius_runs

table = MovidiusModel(MYRIAD1_P_STAT, MYRIAD1_P_ACT, MYRIAD1_UNITS)
for name, units in MOVIDIUS_BENCHMARKS.items():
    print(f"{name:>16}: " + " ".join(f"{movidius_power(table, k, units):7.2f}" for k in (1, 4, 8)))

# %% [markdown]
# The fit recovers every value except the cost of the unit whose cost is never
# the largest in a mix.

# %%
model, report = fit_movidius(movidius_runs(table), benchmarks=MOVIDIUS_EXTENDED_BENCHMARKS)
print(f"P_stat {model.p_stat:.4f}  P_act {model.p_act:.4f}")
for unit, (p_dyn, o) in model.units.items():
    print(f"{unit:>9}: P_dyn {p_dyn:6.3f}  O {'unidentified' if o is None else f'{o:6.3f}'}")
for note in report.notes:
    print("note:", note)
