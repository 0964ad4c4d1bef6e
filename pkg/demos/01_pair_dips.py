"""
Where the 13C pairs show up in a decoupling sweep.

Sweeps N = 32 over the revival grid with the bundled environment and lists,
for every pair, the predicted resonance next to the deepest point nearby.
"""
import numpy as np

from nvdecouple import dd_sweep, pair_resonance_taus, reference_model, revival_grid

model = reference_model()
taus = revival_grid(model.field, 130)          # ns, m = 1..130
F = dd_sweep(model, 32, taus)
F_pairs = dd_sweep(model, 32, taus, include_carbons=False, apply_envelope=False)

print(f"{len(taus)} taus from {taus[0] / 1e3:.3f} to {taus[-1] / 1e3:.3f} us")
print(f"{'pair':6s} {'regime':12s} {'tau1 (us)':>10s} {'dip at (us)':>12s} {'F there':>8s}")
for p in model.pairs:
    r = pair_resonance_taus(p, 1)
    t1 = r.taus[0] * 1e9
    near = np.flatnonzero(np.abs(taus / t1 - 1) <= 0.03)
    j = near[np.argmin(F_pairs[near])]
    print(f"{p.label:6s} {r.regime:12s} {t1 / 1e3:10.3f} {taus[j] / 1e3:12.3f} {F[j]:8.4f}")

# the isolated carbons are invisible on the grid: M = 1 exactly at every revival
F_c = dd_sweep(model, 32, taus, include_pairs=False, apply_envelope=False)
print("largest carbon-only deviation from 1 on the grid:", float(np.max(np.abs(F_c - 1))))
