"""
Choosing N and tau for a requested storage time.

The schedule keeps tau on the revival grid, nudges it within +-10 ns to the
best predicted signal, and stays clear of every modeled pair resonance.
"""
from nvdecouple import ScalingLaw, reference_model, tailor_sequence

model = reference_model()
law = ScalingLaw(2.99e-3, 0.799)
candidates = [64, 256, 1024, 2048, 4096, 10240]

print(f"{'t (s)':>7s} {'N':>6s} {'tau (ns)':>9s} {'F pred':>7s}  nearest resonance")
for t in (0.01, 0.05, 0.1, 0.5, 1.0, 2.0):
    s = tailor_sequence(model, t, candidates, scaling=law)
    label, dist = min(s.avoided, key=lambda a: a[1])
    print(f"{t:7.2f} {s.n_pulses:6d} {s.tau_ns:9d} {s.predicted_fidelity:7.4f}  "
          f"{label} at {dist * 1e9:.0f} ns")
