"""
Reading out a pair's couplings through electron-controlled gates.

For each pair: pick a DD gate that rotates the pseudo-spin by about +-pi/2,
run the Ramsey-type sequence with the electron in m_s = 0 and m_s = -1, and
turn the two precession frequencies back into X and Z.
"""
import math

import numpy as np

from nvdecouple import (design_gate, extract_frequency, infer_Z, reference_model,
                        simulate_pair_spectroscopy)
from nvdecouple.protocols import gate_character

model = reference_model()

for p in model.pairs:
    tau, n = design_gate(p)
    ch = gate_character(p, tau, n)
    dt = 1 / (6 * math.hypot(p.x, p.z))
    t = np.arange(2048) * dt
    w0 = extract_frequency(simulate_pair_spectroscopy(p, 0, (tau, n), 0.0, t)).refined
    w1 = extract_frequency(simulate_pair_spectroscopy(p, -1, (tau, n), 0.0, t)).refined
    print(f"{p.label}: gate tau={tau * 1e6:7.3f} us N={n:2d} "
          f"(angles {math.degrees(ch.angle0):5.1f}, {math.degrees(ch.angle1):5.1f} deg)  "
          f"X={w0:8.1f} Hz (model {p.x:7.1f})  Z={infer_Z(w0, w1):7.1f} Hz (model {p.z:7.1f})")
