import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvdecouple import reference as ref
from nvdecouple.estimation import (FitError, crossing_model, crossing_time, envelope_model,
                                   extract_frequency, fit_envelope, fit_fidelity_crossing,
                                   fit_ramsey, fit_scaling, fit_t1, jacobian, nlls_fit,
                                   pair_factor, ramsey_model, t1_model)
from nvdecouple.model import EnvironmentModel, FieldConfig, Trace
from nvdecouple.protocols import ScalingLaw

FIELD = FieldConfig(b_z=403.553)
NOISE = 0.01


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


# -- synthetic generators (one per fit model) ----------------------------------------

def t1_data(seed, t1=ref.ELECTRON_T1):
    t = np.linspace(0, 3 * t1, 50)
    return Trace(t, t1_model(t, t1) + NOISE * _rng(seed).standard_normal(t.size))


def envelope_data(seed, model, n=1024, truth=(0.45, 1.0, 2.0)):
    tau_min = round(1e9 / 432.0035e3)
    tau_max = int(2.5 * truth[1] / (2 * n) * 1e9)
    taus = np.unique(np.round(np.linspace(tau_min, tau_max, 1500)).astype(np.int64))
    t = 2 * n * taus * 1e-9
    m = pair_factor(model, n, taus * 1e-9)
    y = envelope_model(t, m, *truth) + NOISE * _rng(seed).standard_normal(t.size)
    return Trace(t, y, {"N": str(n)})


RAMSEY_TRUTH = dict(a=0.5, A=0.45, t2=20.8e-3, delta=70.0, phi=0.3)


def ramsey_data(seed):
    t = np.linspace(0, 0.06, 300)
    p = RAMSEY_TRUTH
    y = ramsey_model(t, p["a"], p["A"], p["t2"], p["delta"], p["phi"])
    return Trace(t, y + NOISE * _rng(seed).standard_normal(t.size))


BEAT_TRUTH = dict(a=0.5, A=0.4, t2=0.1, delta=247.0, phi=0.0, f_b=ref.BEATING)


def beating_data(seed):
    t = np.linspace(0, 0.2, 400)
    p = BEAT_TRUTH
    y = ramsey_model(t, p["a"], p["A"], p["t2"], p["delta"], p["phi"], p["f_b"])
    return Trace(t, y + NOISE * _rng(seed).standard_normal(t.size))


CROSS_A = 0.6
CROSS_T = ref.CLASSICAL_CROSSING / math.log(3 * CROSS_A)


def crossing_data(seed):
    t = np.linspace(0, 3, 100)
    y = crossing_model(t, CROSS_A, CROSS_T) + NOISE * _rng(seed).standard_normal(t.size)
    return Trace(t, y)


# -- engine --------------------------------------------------------------------------

def _linear(p, d):
    return p["k"] * d.times - d.values


def test_exact_linear():
    t = np.linspace(0, 1, 20)
    fit = nlls_fit(_linear, {"k": 1.0}, None, Trace(t, 2 * t))
    assert fit.converged and fit["k"] == pytest.approx(2.0, abs=1e-8)
    assert 1 <= fit.iterations <= 2


def test_engine_input_errors():
    with pytest.raises(FitError):
        nlls_fit(_linear, {"k": 1.0}, None, Trace([], []))
    t = np.linspace(0, 1, 5)
    with pytest.raises(FitError):
        nlls_fit(_linear, {"k": 5.0}, {"k": (0, 1)}, Trace(t, t))
    with pytest.raises(FitError):
        nlls_fit(lambda p, d: p["a"] + p["b"] - d.values, {"a": 0, "b": 0}, None,
                 Trace([0.0], [1.0]))


def test_singular_problem_is_flagged_not_raised():
    # residual does not depend on b: its column is dead and its sigma infinite
    t = np.linspace(0, 1, 10)
    fit = nlls_fit(lambda p, d: p["a"] - d.values, {"a": 0.0, "b": 1.0}, None, Trace(t, t))
    assert math.isinf(fit.sigmas["b"])
    assert fit.to_record()["sigmas"]["b"] is None


def test_sigmas_nonnegative_and_record():
    fit = fit_t1(t1_data(0))
    assert all(s >= 0 for s in fit.sigmas.values())
    assert fit.residual_norm >= 0
    rec = fit.to_record()
    assert set(rec) >= {"params", "sigmas", "residual_norm", "converged", "iterations"}


# -- per-model examples --------------------------------------------------------------

def test_t1_examples():
    assert t1_model(0.0, 17.0) == 1.0
    assert t1_model(5.0, 5.0) == pytest.approx(2 / 3 / math.e + 1 / 3)
    assert t1_model(5.0, 5.0) == pytest.approx(0.5785, abs=1e-4)
    fit = fit_t1(t1_data(1))
    assert fit.converged
    assert fit["T1"] == pytest.approx(ref.ELECTRON_T1, rel=0.01)


def test_t1_rejects_out_of_range():
    with pytest.raises(FitError):
        fit_t1(Trace([0, 1, 2], [1.0, 1.2, 0.9]))


def test_envelope_recovery(ref_model):
    fit = fit_envelope(envelope_data(0, ref_model), ref_model)
    assert fit.converged
    for k, v in zip(("A", "T", "n"), (0.45, 1.0, 2.0)):
        assert fit[k] == pytest.approx(v, rel=0.03)


def test_envelope_without_pairs_is_exact():
    m = EnvironmentModel(FIELD)
    n = 64
    taus = np.arange(2315, 2315 * 400, 2315 * 3, dtype=np.int64)
    t = 2 * n * taus * 1e-9
    data = Trace(t, envelope_model(t, 1.0, 0.42, 0.05, 1.7), {"N": str(n)})
    fit = fit_envelope(data, m)
    for k, v in zip(("A", "T", "n"), (0.42, 0.05, 1.7)):
        assert fit[k] == pytest.approx(v, rel=1e-6)


def test_envelope_rejects_off_grid_times(ref_model):
    with pytest.raises(FitError):
        fit_envelope(Trace([1e-3, 2.00001e-3], [0.9, 0.8], {"N": "4"}), ref_model)
    with pytest.raises(FitError):
        fit_envelope(Trace([1e-3, 2e-3], [0.9, 0.8]), ref_model)


def test_ramsey_recovery():
    fit = fit_ramsey(ramsey_data(2))
    assert fit.converged
    assert fit["T2*"] == pytest.approx(20.8e-3, rel=0.03)
    assert fit["delta"] == pytest.approx(70.0, rel=0.03)


def test_ramsey_beating_recovery():
    fit = fit_ramsey(beating_data(3), with_beating=True)
    assert fit.converged
    assert abs(fit["f_b"] - ref.BEATING) <= 3.0
    assert fit["delta"] == pytest.approx(247.0, abs=1.0)


def test_ramsey_without_signal():
    t = np.linspace(0, 0.06, 200)
    data = Trace(t, 0.5 + NOISE * _rng(5).standard_normal(t.size))
    fit = fit_ramsey(data)
    assert (not fit.converged) or fit.sigmas["delta"] > abs(fit["delta"]) \
        or fit["A"] < 5 * NOISE
    with pytest.raises(FitError):
        fit_ramsey(Trace(np.arange(5.0), np.ones(5)))


def test_scaling_examples():
    law = ScalingLaw(3e-3, 0.799)
    n = np.array([4, 16, 64, 256, 1024, 4096, 10240])
    got, fit = fit_scaling(np.column_stack([n, law(n)]), return_fit=True)
    assert got.t_ref == pytest.approx(3e-3, rel=1e-10)
    assert got.eta == pytest.approx(0.799, abs=1e-10)
    assert fit.residual_norm < 1e-12
    assert fit_scaling([(4, 0.2), (8, 0.4)]).eta == pytest.approx(1.0, abs=1e-12)
    pred = ScalingLaw(ref.SCALING_T_REF, ref.SCALING_ETA)(ref.MAX_PULSES)
    assert pred == pytest.approx(ref.MAX_COHERENCE, rel=0.01)
    for bad in ([(4, 1.0)], [(4, 1.0), (4, 2.0)], [(0, 1.0), (4, 2.0)], [(4, -1.0), (8, 2.0)]):
        with pytest.raises(FitError):
            fit_scaling(bad)


def test_crossing_examples():
    assert crossing_time(2 / 3, 1.7) == pytest.approx(1.7 * math.log(2))
    assert crossing_time(0.3, 1.0) is None
    fit, tc = fit_fidelity_crossing(crossing_data(0))
    assert fit.converged
    assert tc == pytest.approx(ref.CLASSICAL_CROSSING, rel=0.02)
    assert fit.extra["crossing"] is True
    t = np.linspace(0, 3, 50)
    fit, tc = fit_fidelity_crossing(Trace(t, crossing_model(t, 0.3, 1.0)))
    assert tc is None and fit.extra["crossing"] is False


def test_extract_frequency_examples():
    t = np.linspace(0, 0.1, 2048, endpoint=False)
    est = extract_frequency(Trace(t, np.cos(2 * np.pi * 133.8 * t)))
    assert est.refined == pytest.approx(133.8, abs=0.5)
    assert abs(est.raw - 133.8) <= est.bin_width
    t = np.linspace(0, 0.5, 4096, endpoint=False)
    two = np.cos(2 * np.pi * 244 * t) + 0.2 * np.cos(2 * np.pi * 22 * t)
    assert extract_frequency(Trace(t, two)).refined == pytest.approx(244, abs=0.5)
    with pytest.raises(FitError):
        extract_frequency(Trace(t, np.full(t.size, 0.7)))
    with pytest.raises(FitError):
        extract_frequency(Trace([0, 1, 3, 4, 5, 6, 7, 8], np.arange(8.0)))


# -- round trips and gradient checks ---------------------------------------------

def _within(fit, truth, k=5.0):
    return all(abs(fit[name] - v) <= k * fit.sigmas[name] for name, v in truth.items())


def _cases(ref_model):
    return {
        "t1": (t1_data, fit_t1, {"T1": ref.ELECTRON_T1}),
        "envelope": (lambda s: envelope_data(s, ref_model), lambda d: fit_envelope(d, ref_model),
                     {"A": 0.45, "T": 1.0, "n": 2.0}),
        "ramsey": (ramsey_data, fit_ramsey,
                   {"a": 0.5, "A": 0.45, "T2*": 20.8e-3, "delta": 70.0, "phi": 0.3}),
        "beating": (beating_data, lambda d: fit_ramsey(d, with_beating=True),
                    {"a": 0.5, "A": 0.4, "T2*": 0.1, "delta": 247.0, "f_b": ref.BEATING}),
        "crossing": (crossing_data, lambda d: fit_fidelity_crossing(d)[0],
                     {"A": CROSS_A, "T_dec": CROSS_T}),
    }


@pytest.mark.parametrize("name", ["t1", "envelope", "ramsey", "beating", "crossing"])
def test_round_trip_within_five_sigma(name, ref_model):
    make, fit_fn, truth = _cases(ref_model)[name]
    hits = sum(_within(fit_fn(make(100 + s)), truth) for s in range(20))
    assert hits >= 19


def test_scaling_round_trip_with_noise():
    law = ScalingLaw(ref.SCALING_T_REF, ref.SCALING_ETA)
    n = np.array([4, 16, 64, 256, 1024, 4096, 10240], dtype=float)
    hits = 0
    for s in range(20):
        t = law(n) * (1 + NOISE * _rng(200 + s).standard_normal(n.size))
        _, fit = fit_scaling(np.column_stack([n, t]), return_fit=True)
        hits += _within(fit, {"t_ref": law.t_ref, "eta": law.eta})
    assert hits >= 19


def _t1_resid(p, d):
    return t1_model(d.times, p["T1"]) - d.values


@pytest.mark.parametrize("name", ["t1", "ramsey", "beating", "crossing"])
def test_forward_matches_central_jacobian(name, ref_model):
    from nvdecouple import estimation as est
    data = {"t1": t1_data, "ramsey": ramsey_data, "beating": beating_data,
            "crossing": crossing_data}[name](7)
    fit = _cases(ref_model)[name][1](data)
    p = fit.params
    if name == "t1":
        fn = _t1_resid
    elif name == "crossing":
        def fn(q, d):
            return crossing_model(d.times, q["A"], q["T_dec"]) - d.values
    else:
        def fn(q, d):
            return est.ramsey_model(d.times, q["a"], q["A"], q["T2*"], q["delta"], q["phi"],
                                    q.get("f_b")) - d.values
    fwd = jacobian(fn, p, data)
    cen = jacobian(fn, p, data, central=True)
    scale = np.abs(cen).max(axis=0)
    assert np.all(np.abs(fwd - cen).max(axis=0) <= 1e-4 * scale)


def test_envelope_jacobian(ref_model):
    data = envelope_data(7, ref_model)
    fit = fit_envelope(data, ref_model)
    taus = data.times / (2 * 1024)
    m = pair_factor(ref_model, 1024, np.round(taus * 1e9) * 1e-9)

    def fn(q, d):
        return envelope_model(d.times, m, q["A"], q["T"], q["n"]) - d.values
    fwd = jacobian(fn, fit.params, data)
    cen = jacobian(fn, fit.params, data, central=True)
    scale = np.abs(cen).max(axis=0)
    assert np.all(np.abs(fwd - cen).max(axis=0) <= 1e-4 * scale)


@pytest.mark.parametrize("name", ["t1", "envelope", "ramsey", "beating", "crossing"])
def test_fits_are_deterministic(name, ref_model):
    make, fit_fn, _ = _cases(ref_model)[name]
    assert fit_fn(make(9)) == fit_fn(make(9))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.01, 10.0), st.integers(3, 30))
def test_scaling_exact_on_power_law(eta, t_ref, k):
    law = ScalingLaw(t_ref, eta)
    n = 4 * 2.0 ** np.arange(k // 3 + 2)
    got, fit = fit_scaling(np.column_stack([n, law(n)]), return_fit=True)
    assert got.eta == pytest.approx(eta, rel=1e-9)
    assert got.t_ref == pytest.approx(t_ref, rel=1e-9)
    assert fit.residual_norm < 1e-9
