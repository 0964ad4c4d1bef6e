"""
Least-squares estimation.

``nlls_fit`` is a small Levenberg-Marquardt engine (multiplicative damping of
the normal equations, forward-difference Jacobian). The fit models built on it
cover relaxation, decoupling envelopes, Ramsey fringes, power-law scaling and
the classical-bound crossing of a fidelity decay.

Parameters travel as plain dicts; their order is the order of ``init``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dynamics import pair_modulation_batch
from .model import EnvironmentModel, ModelError, Trace
from .protocols import ScalingLaw

JAC_STEP = 1e-6
MAX_ITER = 200
RTOL = 1e-10
LAMBDA0 = 1e-6
LAMBDA_MAX = 1e12


class FitError(ModelError):
    """Invalid fit input (not raised for non-convergence, which is flagged)."""


@dataclass(frozen=True)
class FitResult:
    params: dict
    sigmas: dict
    residual_norm: float
    converged: bool
    iterations: int
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def to_record(self) -> dict:
        def clean(v):
            return float(v) if math.isfinite(v) else None
        rec = {
            "params": {k: clean(v) for k, v in self.params.items()},
            "sigmas": {k: clean(v) for k, v in self.sigmas.items()},
            "residual_norm": clean(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }
        for k, v in self.extra.items():
            rec[k] = clean(v) if isinstance(v, float) else v
        return rec


ResidualFn = Callable[[Mapping[str, float], Trace], np.ndarray]


def _vec_to_dict(names, p):
    return {k: float(v) for k, v in zip(names, p)}


def _bounds_arrays(names, bounds):
    lo = np.full(len(names), -np.inf)
    hi = np.full(len(names), np.inf)
    for i, k in enumerate(names):
        if bounds and k in bounds:
            lo[i], hi[i] = bounds[k]
    return lo, hi


def jacobian(residual_fn: ResidualFn, params: Mapping[str, float], data: Trace, bounds=None,
             step: float = JAC_STEP, central: bool = False) -> np.ndarray:
    """Finite-difference Jacobian of the residual vector (rows: points, cols: params).

    Steps are relative (``step * |p|``, or ``step`` for p = 0) and flip sign
    when the forward point would leave the bounds.
    """
    names = list(params)
    p = np.array([params[k] for k in names], dtype=float)
    lo, hi = _bounds_arrays(names, bounds)
    r0 = np.asarray(residual_fn(_vec_to_dict(names, p), data), dtype=float)
    J = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = step * (abs(p[j]) if p[j] != 0 else 1.0)
        if central:
            up, dn = p.copy(), p.copy()
            up[j] += h
            dn[j] -= h
            J[:, j] = (residual_fn(_vec_to_dict(names, up), data)
                       - residual_fn(_vec_to_dict(names, dn), data)) / (2 * h)
            continue
        if p[j] + h > hi[j]:
            h = -h
        q = p.copy()
        q[j] += h
        J[:, j] = (np.asarray(residual_fn(_vec_to_dict(names, q), data)) - r0) / h
    return J


def _sigmas(J, r, n_params):
    m = r.size
    dof = max(m - n_params, 1)
    s2 = float(r @ r) / dof
    jtj = J.T @ J
    cov = np.linalg.pinv(jtj)
    sig = np.sqrt(np.clip(np.diag(cov) * s2, 0, None))
    dead = ~np.any(J != 0, axis=0)
    sig[dead] = np.inf
    return sig


def nlls_fit(residual_fn: ResidualFn, init: Mapping[str, float], bounds, data: Trace,
             max_iter: int = MAX_ITER, rtol: float = RTOL) -> FitResult:
    """Levenberg-Marquardt minimization of ||residual_fn(params, data)||^2.

    ``bounds`` maps parameter names to (lo, hi); trial points are clipped into
    them. Converges when the relative change of the residual norm of an
    accepted step drops below ``rtol`` (or the residual vanishes). If no
    damping makes a step acceptable the result is flagged non-converged.
    """
    if len(data) == 0:
        raise FitError("no data points")
    names = list(init)
    if len(data) < len(names):
        raise FitError(f"{len(data)} points cannot determine {len(names)} parameters")
    p = np.array([init[k] for k in names], dtype=float)
    lo, hi = _bounds_arrays(names, bounds)
    if np.any(p < lo) or np.any(p > hi) or not np.all(np.isfinite(p)):
        raise FitError(f"initial parameters {dict(init)} outside bounds {bounds}")

    def resid(q):
        return np.asarray(residual_fn(_vec_to_dict(names, q), data), dtype=float)

    r = resid(p)
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise FitError("residual is not finite at the initial parameters")
    scale = float(np.sum(np.asarray(data.values) ** 2)) + 1e-300
    lam = LAMBDA0
    converged = False
    it = 0
    J = None
    while it < max_iter:
        if cost <= 1e-20 * scale:
            converged = True
            break
        J = jacobian(residual_fn, _vec_to_dict(names, p), data, bounds)
        jtj = J.T @ J
        g = J.T @ r
        d = np.diag(jtj)
        accepted = False
        while lam <= LAMBDA_MAX:
            A = jtj + lam * np.diag(d)
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = np.clip(p + step, lo, hi)
                rt = resid(trial)
                ct = float(rt @ rt)
                if math.isfinite(ct) and ct <= cost:
                    accepted = True
                    break
            lam *= 10
        if not accepted:
            break
        it += 1
        change = (cost - ct) / cost if cost > 0 else 0.0
        p, r, cost = trial, rt, ct
        lam = max(lam / 10, 1e-300)
        if change < rtol:
            converged = True
            break

    J = jacobian(residual_fn, _vec_to_dict(names, p), data, bounds)
    sig = _sigmas(J, r, len(names))
    if not np.all(np.isfinite(p)):
        converged = False
    return FitResult(_vec_to_dict(names, p), _vec_to_dict(names, sig),
                     float(math.sqrt(cost)), converged, it)


# -- helpers -------------------------------------------------------------------

def _check_values(data: Trace, lo=0.0, hi=1.05):
    v = np.asarray(data.values)
    if v.size and (v.min() < lo or v.max() > hi):
        raise FitError(f"data values must lie in [{lo}, {hi}]")


def _span(data: Trace) -> float:
    if len(data) < 2:
        raise FitError("need at least two time points")
    return float(data.times[-1] - data.times[0])


# -- relaxation --------------------------------------------------------------

def t1_model(t, t1):
    return 2 / 3 * np.exp(-np.asarray(t) / t1) + 1 / 3


def fit_t1(data: Trace) -> FitResult:
    """Average fidelity F = 2/3 exp(-t/T1) + 1/3."""
    _check_values(data)
    span = _span(data)
    return nlls_fit(lambda p, d: t1_model(d.times, p["T1"]) - d.values,
                    {"T1": span}, {"T1": (1e-12 * span, np.inf)}, data)


# -- decoupling envelope ----------------------------------------------------------

def envelope_model(t, m, a, t_coh, n):
    return 0.5 + a * m * np.exp(-((np.asarray(t) / t_coh) ** n))


def pair_factor(model: EnvironmentModel, n_pulses: int, taus) -> np.ndarray:
    """Product of the pair modulation factors of ``model`` at each tau."""
    taus = np.asarray(taus, dtype=float)
    if not model.pairs:
        return np.ones(taus.shape)
    x = np.array([p.x for p in model.pairs])[:, None]
    z = np.array([p.z for p in model.pairs])[:, None]
    return np.prod(pair_modulation_batch(x, z, n_pulses, taus[None, :]), axis=0)


def fit_envelope(data: Trace, model: EnvironmentModel, n_pulses: int | None = None) -> FitResult:
    """F = 1/2 + A M(t) exp(-(t/T)^n) at fixed N, with M from the model's pairs.

    ``n_pulses`` defaults to ``data.meta["N"]``. Each time must be 2 N tau with
    tau on the integer-ns grid.
    """
    if n_pulses is None:
        if "N" not in data.meta:
            raise FitError("pulse number not given and not in trace metadata")
        n_pulses = int(data.meta["N"])
    if n_pulses < 1:
        raise FitError("envelope fit needs N >= 1")
    tau_ns = np.asarray(data.times) / (2 * n_pulses) * 1e9
    if np.any(np.abs(tau_ns - np.round(tau_ns)) > 1e-3) or np.any(np.round(tau_ns) < 1):
        raise FitError(f"data times are not 2 N tau with integer-ns tau for N = {n_pulses}")
    m = pair_factor(model, n_pulses, np.round(tau_ns) * 1e-9)
    span = _span(data)

    def resid(p, d):
        return envelope_model(d.times, m, p["A"], p["T"], p["n"]) - d.values

    fit = nlls_fit(resid, {"A": 0.5, "T": span / 2, "n": 2.0},
                   {"A": (0.0, 1.0), "T": (1e-12 * span, np.inf), "n": (0.5, 4.0)}, data)
    return FitResult(fit.params, fit.sigmas, fit.residual_norm, fit.converged, fit.iterations,
                     {"N": n_pulses})


# -- Ramsey fringes -------------------------------------------------------------------

def ramsey_model(t, a, amp, t2, delta, phi, f_b=None):
    t = np.asarray(t)
    y = amp * np.exp(-((t / t2) ** 2)) * np.cos(2 * np.pi * delta * t + phi)
    if f_b is not None:
        y = y * np.cos(2 * np.pi * f_b * t)
    return a + y


def _uniform_step(data: Trace) -> float:
    t = np.asarray(data.times)
    dt = np.diff(t)
    if dt.size == 0 or np.ptp(dt) > 1e-6 * dt.mean():
        raise FitError("trace must be uniformly sampled")
    return float(dt.mean())


def periodogram(data: Trace):
    """(frequencies, power) of the mean-removed trace; needs uniform sampling."""
    dt = _uniform_step(data)
    v = np.asarray(data.values) - np.mean(data.values)
    return np.fft.rfftfreq(v.size, dt), np.abs(np.fft.rfft(v)) ** 2


def _local_peaks(power):
    k = np.arange(1, power.size)
    left = power[k] > power[k - 1]
    right = np.append(power[k[:-1]] >= power[k[:-1] + 1], True)
    return k[left & right]


def _phase_at(t, v, f):
    c = np.cos(2 * np.pi * f * t)
    s = np.sin(2 * np.pi * f * t)
    (ac, as_), *_ = np.linalg.lstsq(np.column_stack([c, s]), v, rcond=None)
    return math.hypot(ac, as_), math.atan2(-as_, ac)


def fit_ramsey(data: Trace, with_beating: bool = False) -> FitResult:
    """a + A exp(-(t/T2*)^2) cos(2 pi delta t + phi) [x cos(2 pi f_b t)].

    delta is in Hz. Initial frequencies come from the periodogram; with beating
    the two strongest peaks are taken as delta +- f_b.
    """
    if len(data) < 8:
        raise FitError("Ramsey fit needs at least 8 points")
    t = np.asarray(data.times)
    v = np.asarray(data.values)
    span = _span(data)
    freqs, power = periodogram(data)
    peaks = _local_peaks(power)
    a0 = float(v.mean())
    if peaks.size == 0:
        delta0, fb0 = 0.0, 0.0
    else:
        order = peaks[np.argsort(power[peaks])[::-1]]
        delta0 = float(freqs[order[0]])
        fb0 = 1 / span
        if with_beating and order.size > 1:
            f1, f2 = freqs[order[0]], freqs[order[1]]
            delta0, fb0 = float((f1 + f2) / 2), float(abs(f1 - f2) / 2)
    amp0, phi0 = _phase_at(t - t[0], v - a0, delta0) if delta0 > 0 else (0.0, 0.0)
    amp0 = max(amp0, float(np.ptp(v)) / 2) if with_beating else amp0
    init = {"a": a0, "A": amp0, "T2*": span / 2, "delta": delta0,
            "phi": float(phi0 - 2 * np.pi * delta0 * t[0])}
    bounds = {"A": (0.0, np.inf), "T2*": (1e-12 * span, np.inf), "delta": (0.0, np.inf)}
    if with_beating:
        init["f_b"] = fb0
        bounds["f_b"] = (0.0, np.inf)

    def resid(p, d):
        return ramsey_model(d.times, p["a"], p["A"], p["T2*"], p["delta"], p["phi"],
                            p.get("f_b")) - d.values

    return nlls_fit(resid, init, bounds, data)


# -- scaling with pulse number -----------------------------------------------------

def fit_scaling(points, return_fit: bool = False):
    """T(N) = t_ref (N/4)^eta by linear least squares in log-log space."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("scaling points must be (N, T) pairs")
    n, t = pts[:, 0], pts[:, 1]
    if np.any(n <= 0) or np.any(t <= 0):
        raise FitError("N and T must be positive")
    if np.unique(n).size < 2:
        raise FitError("need at least two distinct N")
    X = np.column_stack([np.ones_like(n), np.log(n / 4)])
    y = np.log(t)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    law = ScalingLaw(float(np.exp(coef[0])), float(coef[1]))
    if not return_fit:
        return law
    r = X @ coef - y
    dof = max(len(y) - 2, 1)
    cov = np.linalg.inv(X.T @ X) * float(r @ r) / dof
    sig = np.sqrt(np.diag(cov))
    fit = FitResult({"t_ref": law.t_ref, "eta": law.eta},
                    {"t_ref": law.t_ref * float(sig[0]), "eta": float(sig[1])},
                    float(np.linalg.norm(r)), True, 1)
    return law, fit


# -- fidelity crossing ------------------------------------------------------------

CLASSICAL_BOUND = 2 / 3


def crossing_model(t, a, t_dec):
    return 1 / 3 + a * np.exp(-np.asarray(t) / t_dec)


def crossing_time(a: float, t_dec: float) -> float | None:
    """Time where 1/3 + A exp(-t/T) reaches 2/3; None when A <= 1/3."""
    if a <= 1 / 3:
        return None
    return t_dec * math.log(3 * a)


def fit_fidelity_crossing(data: Trace):
    """Fit F = 1/3 + A exp(-t/T_dec) and return (fit, crossing time or None)."""
    _check_values(data)
    span = _span(data)
    a0 = min(max(float(data.values[0]) - 1 / 3, 1e-3), 1.0)
    fit = nlls_fit(lambda p, d: crossing_model(d.times, p["A"], p["T_dec"]) - d.values,
                   {"A": a0, "T_dec": span / 2},
                   {"A": (0.0, 1.0), "T_dec": (1e-12 * span, np.inf)}, data)
    tc = crossing_time(fit["A"], fit["T_dec"])
    extra = {"t_cross": tc if tc is not None else None, "crossing": tc is not None}
    fit = FitResult(fit.params, fit.sigmas, fit.residual_norm, fit.converged, fit.iterations,
                    extra)
    return fit, tc


# -- frequency extraction ----------------------------------------------------------

@dataclass(frozen=True)
class FrequencyEstimate:
    raw: float          # periodogram bin centre (Hz)
    refined: float      # sinusoid-fit value (Hz)
    bin_width: float


def extract_frequency(data: Trace) -> FrequencyEstimate:
    """Dominant frequency: strongest periodogram bin, refined by a sinusoid fit."""
    if len(data) < 8:
        raise FitError("need at least 8 samples")
    freqs, power = periodogram(data)
    v = np.asarray(data.values)
    if np.ptp(v) <= 1e-12 * max(1.0, float(np.max(np.abs(v)))):
        raise FitError("trace is constant; no frequency to extract")
    k = int(np.argmax(power[1:]) + 1)
    raw = float(freqs[k])
    df = float(freqs[1])
    t = np.asarray(data.times) - data.times[0]
    base = Trace(t, v)
    amp0, phi0 = _phase_at(t, v - v.mean(), raw)

    def resid(p, d):
        return p["a"] + p["A"] * np.cos(2 * np.pi * p["f"] * d.times + p["phi"]) - d.values

    fit = nlls_fit(resid, {"a": float(v.mean()), "A": amp0, "f": raw, "phi": phi0},
                   {"A": (0.0, np.inf), "f": (max(raw - df, 0.0), raw + df)}, base)
    refined = fit["f"] if fit.converged or fit.iterations > 0 else raw
    return FrequencyEstimate(raw, float(refined), df)
