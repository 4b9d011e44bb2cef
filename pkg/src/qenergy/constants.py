"""Reference values measured on the two platforms the models were built for.

CPU coefficients are per thread, with frequency in tenths of GHz.  Movidius
values are in mW.
"""

# (A, alpha, B) for the dynamic CPU power law  A * f**alpha + B
INSTRUCTION_COEFFS = {
    "cas": (0.001392, 1.6415, 0.0510),
    "fpdiv": (0.001038, 1.7226, 0.0585),
    "add": (0.001004, 1.8148, 0.0912),
    "avx-add": (0.001130, 1.7828, 0.0894),
    "pause": (0.000854, 1.7920, 0.0736),
}

# Common exponent used when a whole queue benchmark is treated as one operation.
ALPHA0 = 1.7

# Frequency grid (deci-GHz) of the instruction micro-benchmarks.
MICROBENCH_FREQS_DECI = tuple(range(12, 35, 2))

# Frequencies (GHz) the queue experiments run at.
QUEUE_FREQS_GHZ = (1.2, 2.3, 3.4)

MYRIAD1_P_STAT = 62.63
MYRIAD1_P_ACT = 51.4

# unit -> (P_dyn, O) in mW
MYRIAD1_UNITS = {
    "SauXor": (3.05, 1.15),
    "SauMul": (6.97, 1.83),
    "VauXor": (17.57, 13.12),
    "VauMul": (32.78, 11.62),
    "IauXor": (4.53, 1.07),
    "IauMul": (3.98, 4.42),
    "CmuCpss": (1.00, 4.60),
    "CmuCpivr": (6.41, 5.69),
}

# Micro-benchmarks run on the Myriad1 and the functional units each one keeps busy.
# The triple benchmark issues a CMU compare whose table entry is CmuCpss.
MOVIDIUS_BENCHMARKS = {
    **{unit: (unit,) for unit in MYRIAD1_UNITS},
    "SauXorCmuCpss": ("SauXor", "CmuCpss"),
    "SauXorCmuCpivr": ("SauXor", "CmuCpivr"),
    "SauXorIauXor": ("SauXor", "IauXor"),
    "IauXorCmuCpss": ("IauXor", "CmuCpss"),
    "SauXorVauXor": ("SauXor", "VauXor"),
    "SauXorVauMul": ("SauXor", "VauMul"),
    "SauXorCmuIauXor": ("SauXor", "CmuCpss", "IauXor"),
}

# Two extra pairs in which SauMul and IauMul hold the largest cost, so synthetic
# fits can identify those costs too.
MOVIDIUS_EXTENDED_BENCHMARKS = {
    **MOVIDIUS_BENCHMARKS,
    "SauMulSauXor": ("SauMul", "SauXor"),
    "IauMulSauXor": ("IauMul", "SauXor"),
}

MOVIDIUS_SHAVE_COUNTS = (1, 2, 4, 6, 8)
MAX_SHAVES = 8
