"""
From decay curves to a memory figure of merit.

1. Synthetic decoupling data at several N are fitted with the envelope model,
   dividing out the known pair dips.
2. The fitted T(N) are fitted with a power law.
3. The power law predicts T at the largest N; a six-state average fidelity
   decaying on that time scale is checked against the classical 2/3 bound.
"""
import numpy as np

from nvdecouple import Trace, fit_envelope, fit_fidelity_crossing, fit_scaling, reference_model
from nvdecouple.estimation import envelope_model, pair_factor
from nvdecouple.figures import envelope_grid
from nvdecouple.protocols import ScalingLaw

rng = np.random.Generator(np.random.Philox(1))
model = reference_model()
truth = ScalingLaw(2.99e-3, 0.799)

points = []
for n in (64, 256, 1024, 4096):
    T = float(truth(n))
    taus = envelope_grid(model, n, 2.5 * T, points=600)
    t = 2 * n * taus * 1e-9
    y = envelope_model(t, pair_factor(model, n, taus * 1e-9), 0.45, T, 2.0)
    y = y + 0.01 * rng.standard_normal(t.size)
    fit = fit_envelope(Trace(t, y, {"N": str(n)}), model)
    points.append((n, fit["T"]))
    print(f"N={n:5d}: T = {fit['T']:.4f} +- {fit.sigmas['T']:.4f} s (true {T:.4f}), "
          f"n = {fit['n']:.2f}, A = {fit['A']:.3f}")

law = fit_scaling(points)
print(f"power law: T(N=4) = {law.t_ref * 1e3:.3f} ms, eta = {law.eta:.4f}")
print(f"predicted T at N = 10240: {float(law(10240)):.3f} s")

# average fidelity of a stored state, decaying towards 1/3
t = np.linspace(0, 3, 80)
F = 1 / 3 + 0.6 * np.exp(-t / float(law(10240)))
F = F + 0.005 * rng.standard_normal(t.size)
fit, tc = fit_fidelity_crossing(Trace(t, F))
print(f"fidelity fit A = {fit['A']:.3f}, T_dec = {fit['T_dec']:.3f} s, "
      f"crosses 2/3 at {tc:.3f} s")
