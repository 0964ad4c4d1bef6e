import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvdecouple import reference as ref
from nvdecouple.dynamics import Hamiltonian2, dd_branch_propagators, dd_sweep
from nvdecouple.estimation import extract_frequency, periodogram
from nvdecouple.model import (CarbonPair, DDSequence, EnvironmentModel, Envelope, FieldConfig,
                              ModelError, larmor_frequency)
from nvdecouple.protocols import (INTERMEDIATE, X_DOMINANT, Z_DOMINANT, ScalingLaw, axis_angle,
                                  design_gate, gate_character, infer_Z, misaligned_omega0,
                                  pair_resonance_taus, regime_classify, revival_grid,
                                  revival_offset_robustness, simulate_pair_spectroscopy,
                                  tailor_sequence, tau_window_scan)

FIELD = FieldConfig(b_z=403.553)


# -- resonances --------------------------------------------------------------------

def test_resonance_examples(pairs):
    t1 = pair_resonance_taus(pairs["pair1"]).taus[0]
    assert t1 == pytest.approx(63.25e-6, abs=0.01e-6)
    assert abs(t1 - ref.PAIRS["pair1"]["tau"]) < 0.5e-6
    assert pair_resonance_taus(pairs["pair4"]).taus[0] == pytest.approx(119.85e-6, abs=0.01e-6)
    with pytest.raises(ModelError):
        pair_resonance_taus(CarbonPair("none", 0.0, 0.0))
    with pytest.raises(ModelError):
        pair_resonance_taus(CarbonPair("tiny", 0.0, 5e-324))


@settings(max_examples=100, deadline=None)
@given(st.floats(-5e3, 5e3, allow_subnormal=False), st.floats(0, 1e4, allow_subnormal=False),
       st.integers(2, 20))
def test_resonance_spacing(x, z, k_max):
    if math.hypot(x, z / 2) < 1e-290:
        return
    taus = pair_resonance_taus(CarbonPair("p", x, z), k_max).taus
    assert all(b > a for a, b in zip(taus, taus[1:]))
    assert taus[1] == pytest.approx(3 * taus[0], rel=1e-14)
    assert np.allclose(np.diff(taus), 2 * taus[0], rtol=1e-12)


def test_revival_grid():
    g = revival_grid(FIELD, 100)
    assert g[0] == 2315
    assert abs(g[0] * 1e-9 - ref.TAU_L) < 0.5e-9
    assert g[99] == round(100e9 / larmor_frequency(FIELD))
    # 100 / omega_L = 231.4796 us lands on 231480 ns
    assert g[99] * 1e-9 == pytest.approx(231.47e-6, abs=0.015e-6)
    with pytest.raises(ModelError):
        revival_grid(FIELD, 0)


def test_regimes(pairs):
    assert regime_classify(pairs["pair4"]) == X_DOMINANT
    for label in ("pair1", "pair2", "pair3", "pair5", "pair6"):
        assert regime_classify(pairs[label]) == Z_DOMINANT
    assert regime_classify(CarbonPair("e", 500.0, 500.0)) == INTERMEDIATE


# -- gates -----------------------------------------------------------------------

def _angle_deg(a, b):
    return math.degrees(math.acos(np.clip(abs(a @ b), -1, 1)))


def test_gate_x_dominant_rotates_about_z(pairs):
    p = pairs["pair4"]
    tau = round(pair_resonance_taus(p).taus[0] * 1e9) * 1e-9
    ch = gate_character(p, tau, 24)
    z = np.array([0, 0, 1.0])
    assert _angle_deg(ch.axis0, z) < 15 and _angle_deg(ch.axis1, z) < 15
    # opposite senses: axes anti-parallel for equal-sign angles
    assert (ch.axis0 @ z) * (ch.axis1 @ z) < 0


def test_gate_z_dominant_rotates_about_x(pairs):
    p = pairs["pair1"]
    tau = round(pair_resonance_taus(p).taus[0] * 1e9) * 1e-9
    ch = gate_character(p, tau, 14)
    x = np.array([1.0, 0, 0])
    assert _angle_deg(ch.axis0, x) < 15 and _angle_deg(ch.axis1, x) < 15
    assert (ch.axis0 @ x) * (ch.axis1 @ x) < 0


def test_gate_equal_branches():
    h = Hamiltonian2(h_x=2e3, h_z=5e2)
    u0, u1 = dd_branch_propagators(h, h, DDSequence(6, 20000))
    a0, t0 = axis_angle(u0)
    a1, t1 = axis_angle(u1)
    assert np.allclose(a0, a1) and t0 == pytest.approx(t1)


def test_axis_angle_round_trip():
    rng = np.random.Generator(np.random.Philox(3))
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        th = rng.uniform(0.01, np.pi - 0.01)
        sig = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
        u = math.cos(th / 2) * np.eye(2) - 1j * math.sin(th / 2) * np.einsum("i,ijk", n, sig)
        axis, angle = axis_angle(np.exp(0.7j) * u)
        assert angle == pytest.approx(th, abs=1e-10)
        assert np.allclose(axis, n, atol=1e-10)


def test_design_gate_near_half_pi(pairs):
    for p in pairs.values():
        tau, n = design_gate(p)
        assert n % 2 == 0
        assert gate_character(p, tau, n).conditional_error() <= 0.1


# -- spectroscopy ----------------------------------------------------------------------

def _spectrum_peak(p, ms, samples=1024, detuning=0.0, dt=None):
    dt = dt or 1 / (6 * math.hypot(p.x, p.z))
    tr = simulate_pair_spectroscopy(p, ms, design_gate(p), detuning, np.arange(samples) * dt)
    return tr, extract_frequency(tr)


def test_ms0_spectroscopy_gives_x_for_all_pairs(pairs):
    for p in pairs.values():
        _, est = _spectrum_peak(p, 0)
        assert abs(est.raw - abs(p.x)) <= est.bin_width, p.label


def test_pair6_ms0_frequency(pairs):
    p = pairs["pair6"]
    _, est = _spectrum_peak(p, 0, samples=4096, dt=1 / 4000)
    assert est.refined == pytest.approx(ref.PAIRS["pair6"]["omega0"], abs=1.0)


def test_pair3_ms_minus1_with_detuning(pairs):
    p = pairs["pair3"]
    delta = 500.0
    _, est = _spectrum_peak(p, -1, samples=2048, detuning=delta, dt=1 / 30000)
    assert est.refined - delta == pytest.approx(ref.PAIRS["pair3"]["omega_m1"], abs=20.0)


def test_spectroscopy_starts_at_maximum(pairs):
    for p in pairs.values():
        for ms in (0, -1):
            tr, _ = _spectrum_peak(p, ms, samples=256)
            assert tr.values[0] >= tr.values.max() - 1e-12
            assert 0 <= tr.values.min() and tr.values.max() <= 1 + 1e-12


def test_spectroscopy_warns_on_poor_gate(pairs):
    p = pairs["pair4"]
    tr = simulate_pair_spectroscopy(p, 0, (120e-6, 2), 0.0, [0.0, 1e-4])
    assert "warning" in tr.meta
    with pytest.raises(ModelError):
        simulate_pair_spectroscopy(p, 1, (120e-6, 24), 0.0, [0.0])


def test_periodogram_bin(pairs):
    tr, est = _spectrum_peak(pairs["pair4"], 0)
    f, _ = periodogram(tr)
    assert est.bin_width == pytest.approx(f[1] - f[0])


# -- frequencies -----------------------------------------------------------------------

def test_infer_z_examples():
    assert infer_Z(244.0, 7894.0) == pytest.approx(7890.0, abs=1.0)
    assert infer_Z(186.8, 2807.0) == pytest.approx(2801.0, abs=1.0)
    assert infer_Z(300.0, 300.0) == 0.0
    with pytest.raises(ModelError):
        infer_Z(300.0, 200.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5e3), st.floats(1.0, 1e4))
def test_infer_z_round_trip(x, z):
    # Z << X is ill-conditioned in the inputs themselves: omega1 - omega0 ~ Z^2 / 2X
    if z < 0.01 * x:
        return
    assert infer_Z(x, math.hypot(x, z)) == pytest.approx(z, rel=1e-9)


def test_misaligned_examples():
    assert misaligned_omega0(1e4, 2e3, 3e4, FIELD) == larmor_frequency(FIELD)
    tilted = FieldConfig(403.553, b_x=2.5)
    bare = misaligned_omega0(0, 0, 0, tilted)
    assert bare == pytest.approx(1.0705e3 * math.hypot(2.5, 403.553), rel=1e-12)
    spread = misaligned_omega0(0, 0, 5e4, tilted) - misaligned_omega0(0, 0, -5e4, tilted)
    assert 400 < spread < 600
    assert spread <= ref.MISALIGNMENT_SPREAD


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e5, 1e5), st.floats(1.0, 1e4), st.floats(0.1, 10))
def test_misaligned_monotone_in_axz(a, da, bx):
    f = FieldConfig(403.553, b_x=bx)
    assert misaligned_omega0(0, 0, a + da, f) > misaligned_omega0(0, 0, a, f)


# -- robustness ------------------------------------------------------------------------

def test_robustness_identity_without_spread(ref_model):
    taus = revival_grid(FIELD, 20)
    mean = revival_offset_robustness(ref_model, 0.0, 0.0, 3, 32, taus)
    det = dd_sweep(ref_model, 32, taus, apply_envelope=False, include_bath=False,
                   include_pairs=False)
    assert np.allclose(mean.values, det, atol=1e-12)


def test_robustness_reproducible_and_smoothing(ref_model):
    taus = revival_grid(FIELD, 60)
    a, draws = revival_offset_robustness(ref_model, 130.0, 30.0, 50, 32, taus, seed=4,
                                         return_draws=True)
    b = revival_offset_robustness(ref_model, 130.0, 30.0, 50, 32, taus, seed=4)
    assert np.array_equal(a.values, b.values)
    depth = 1 - a.values
    assert depth.max() < np.max(1 - draws)
    with pytest.raises(ModelError):
        revival_offset_robustness(ref_model, 0.0, 0.0, 0, 32, taus)


# -- window scan and tailoring -----------------------------------------------------

def test_window_scan_empty_environment():
    m = EnvironmentModel(FIELD)
    target = int(revival_grid(FIELD, 40)[-1])
    assert tau_window_scan(m, target + 3, 64) == target
    assert tau_window_scan(m, target + 3, 64, window_ns=1, step_ns=1) == target + 3
    with pytest.raises(ModelError):
        tau_window_scan(m, target, 64, window_ns=1, step_ns=2)


def test_window_scan_leaves_a_resonance():
    pair = CarbonPair("p", x=2000.0, z=300.0)
    target = round(pair_resonance_taus(pair).taus[0] * 1e9)
    m = EnvironmentModel(FIELD, pairs=(pair,))
    best = tau_window_scan(m, target, 32)
    assert best != target
    f = dd_sweep(m, 32, [target, best], apply_envelope=False)
    assert f[1] > f[0]


def test_tailor_prefers_largest_n(ref_model):
    law = ScalingLaw(ref.SCALING_T_REF, ref.SCALING_ETA)
    s = tailor_sequence(ref_model, 0.5, [1024, 2048, 4096, 10240], scaling=law)
    assert s.n_pulses == 10240
    assert isinstance(s.tau_ns, int) and 0 <= s.predicted_fidelity <= 1
    tl_ns = 1e9 / larmor_frequency(FIELD)
    assert abs(s.tau_ns - 0.5e9 / (2 * s.n_pulses)) <= tl_ns / 2 + 11
    for p in ref_model.pairs:
        taus = np.array(pair_resonance_taus(p, 400).taus)
        assert np.min(np.abs(s.tau / taus - 1)) >= 0.01
    assert {d["source"] for d in s.to_record()["avoided"]} >= {"pair1", "C1"}


def test_tailor_empty_environment():
    m = EnvironmentModel(FIELD, envelope=Envelope(0.5, 10.0, 2.0))
    s = tailor_sequence(m, 1e-3, [1])
    tl = 1e9 / larmor_frequency(FIELD)
    assert s.tau_ns == round(round(0.5e6 / tl) * tl)
    assert abs(s.tau_ns - 500000) <= tl / 2
    with pytest.raises(ModelError):
        tailor_sequence(m, 1e-9, [10240])
    with pytest.raises(ModelError):
        tailor_sequence(m, 1.0, [])


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-3, 2.0), st.sampled_from([[64], [256, 1024], [4096, 10240]]))
def test_tailor_output_on_grid_and_clear(t, cands):
    pair = CarbonPair("p", x=2082.7, z=230.0)
    m = EnvironmentModel(FIELD, pairs=(pair,))
    s = tailor_sequence(m, t, cands)
    assert s.tau_ns >= 1 and s.tau_ns == int(s.tau_ns)
    taus = np.array(pair_resonance_taus(pair, 4000).taus)
    window = np.arange(s.tau_ns - 10, s.tau_ns + 11) * 1e-9
    clear = np.min(np.abs(window[:, None] / taus[None, :] - 1), axis=1) >= 0.01
    # once resonances sit closer than 1% of tau nothing in the window is clear
    if clear.any():
        assert np.min(np.abs(s.tau / taus - 1)) >= 0.01
