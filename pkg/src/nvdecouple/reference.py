"""
Measured values used as comparison targets (not inputs to the simulator).

Frequencies in Hz, times in s. Geometry vectors in units of a0/4.
"""
from __future__ import annotations

# field / timing
B_Z = 403.553                   # G
LARMOR = 432.004e3              # Hz
TAU_L = 2.3147e-6               # s
ELECTRON_T1 = 3.6e3             # s
ZFS = 2.877623e9                # Hz

# single carbons: label -> (omega0, omega1, T2*)
CARBON_FREQUENCIES = {
    "C1": (431.994e3, 469.320e3, 10.2e-3),
    "C2": (431.874e3, 413.739e3, 12.5e-3),
    "C3": (431.891e3, 447.209e3, 6.6e-3),
    "C4": (431.947e3, 440.740e3, 8.3e-3),
    "C5": (431.934e3, 408.303e3, 20.8e-3),
    "C6": (431.960e3, 480.607e3, 4.0e-3),
    "C7": (431.95e3, 446.63e3, 5.0e-3),
}

# lattice pair classes: (r_vec, r / a0, theta deg, |X| Hz)
PAIR_CLASSES = [
    ((1, 1, 1), 0.433, 0.0, 2061.0),
    ((1, -1, 1), 0.433, 70.5, 687.0),
    ((2, 2, 0), 0.707, 35.3, 236.7),
    ((1, 1, 3), 0.829, 29.5, 186.8),
    ((1, -3, 1), 0.829, 80.0, 133.4),
    ((3, 1, 3), 1.089, 22.0, 102.1),
    ((2, 2, 4), 1.225, 19.5, 75.9),
    ((3, -1, -3), 1.089, 82.4, 61.3),
]

# pairs: label -> dict(tau used, N used, omega0 = X, X theory, omega_-1, Z)
PAIRS = {
    "pair1": dict(tau=63e-6, n=14, omega0=244.0, x_theory=236.7, omega_m1=7894.0, z=7890.0),
    "pair2": dict(tau=76e-6, n=10, omega0=247.0, x_theory=236.7, omega_m1=6587.0, z=6582.0),
    "pair3": dict(tau=111e-6, n=26, omega0=83.0, x_theory=75.9, omega_m1=4420.0, z=4420.0),
    "pair4": dict(tau=120e-6, n=24, omega0=2082.7, x_theory=2061.0, omega_m1=2084.3, z=230.0),
    "pair5": dict(tau=172e-6, n=8, omega0=186.8, x_theory=186.8, omega_m1=2807.0, z=2801.0),
    "pair6": dict(tau=277e-6, n=8, omega0=133.8, x_theory=133.4, omega_m1=1831.0, z=1826.0),
}

# decoupling scaling
SCALING_ETA = 0.799
SCALING_T_REF = 2.99e-3         # s, T at N = 4 implied by MAX_COHERENCE and SCALING_ETA
MAX_COHERENCE = 1.58            # s, at N = 10240
MAX_PULSES = 10240
CLASSICAL_CROSSING = 1.46       # s
BEATING = 23.0                  # Hz
MISALIGNMENT_SPREAD = 500.0     # Hz, approximate maximum
