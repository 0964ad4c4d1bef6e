"""
Resonance bookkeeping, pair spectroscopy and schedule synthesis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .dynamics import (SPIN_HALF, TWO_PI, branch_pair, dd_sweep, hermitian_exp, su2_exp,
                       _pseudo_fields)
from .model import (DEFAULT_CONSTANTS, CarbonPair, EnvironmentModel, FieldConfig,
                    ModelError, PhysicalConstants, Trace, larmor_frequency)

X_DOMINANT = "X>>Z"
Z_DOMINANT = "Z>>X"
INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class ResonanceEntry:
    label: str
    omega: float          # Hz
    taus: tuple           # s
    regime: str


def pseudo_spin_frequency(pair: CarbonPair) -> float:
    """sqrt(X^2 + (Z/2)^2): precession rate of the branch-averaged pseudo-spin (Hz)."""
    return math.hypot(pair.x, pair.z / 2)


def regime_classify(pair: CarbonPair, ratio_threshold: float = 5.0) -> str:
    if abs(pair.x) >= ratio_threshold * pair.z:
        return X_DOMINANT
    if pair.z >= ratio_threshold * abs(pair.x):
        return Z_DOMINANT
    return INTERMEDIATE


def pair_resonance_taus(pair: CarbonPair, k_max: int = 3) -> ResonanceEntry:
    """Decoupling resonances tau_k = (2k - 1) / (4 omega), k = 1..k_max."""
    if pair.x == 0 and pair.z == 0:
        raise ModelError(f"{pair.label}: pair with X = Z = 0 has no resonance")
    w = pseudo_spin_frequency(pair)
    if not w > 0:
        raise ModelError(f"{pair.label}: pseudo-spin frequency underflows to zero")
    taus = tuple((2 * k - 1) / (4 * w) for k in range(1, k_max + 1))
    if not math.isfinite(taus[-1]):
        raise ModelError(f"{pair.label}: resonance times overflow (omega = {w!r} Hz)")
    return ResonanceEntry(pair.label, w, taus, regime_classify(pair))


def single_spin_resonance_taus(a_par: float, a_perp: float, field: FieldConfig, k_max: int = 3,
                               constants: PhysicalConstants = DEFAULT_CONSTANTS) -> tuple:
    """Resonances of an isolated 13C, tau_k = (2k - 1) / (2 (omega0 + omega1))."""
    w0 = larmor_frequency(field, constants)
    w1 = math.hypot(w0 - a_par, a_perp)
    return tuple((2 * k - 1) / (2 * (w0 + w1)) for k in range(1, k_max + 1))


def revival_grid(field: FieldConfig, m_max: int, m_min: int = 1,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Integer-ns taus m / omega_L for m = m_min..m_max."""
    if m_min < 1 or m_max < m_min:
        raise ModelError("revival grid needs 1 <= m_min <= m_max")
    m = np.arange(m_min, m_max + 1)
    return np.round(m * 1e9 / larmor_frequency(field, constants)).astype(np.int64)


def infer_Z(omega0: float, omega1: float) -> float:
    """Hyperfine gradient from the two measured pseudo-spin frequencies."""
    if omega0 < 0 or omega1 < omega0:
        raise ModelError(f"need omega1 >= omega0 >= 0, got ({omega0}, {omega1})")
    return math.sqrt((omega1 - omega0) * (omega1 + omega0))


def misaligned_omega0(a_xx: float, a_xy: float, a_xz: float, field: FieldConfig,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """m_s = 0 precession frequency (Hz) under a transverse field component.

    Hyperfine entries are linear Hz. The effective nuclear g-tensor mixes in
    eta * A with eta = 2 gamma_e / (gamma_c * D) for linear-frequency couplings.
    """
    eta = 2 * constants.gamma_e / (constants.gamma_c * constants.zfs)
    bx, bz = field.b_x, field.b_z
    return constants.gamma_c * math.sqrt((bx * (1 + eta * a_xx)) ** 2
                                         + (eta * bx * a_xy) ** 2
                                         + (bz + eta * bx * a_xz) ** 2)


# -- conditional gates -------------------------------------------------------------

@dataclass(frozen=True)
class GateCharacter:
    axis0: np.ndarray
    angle0: float
    axis1: np.ndarray
    angle1: float

    def conditional_error(self) -> float:
        """Worst relative deviation from a pair of opposite-sense pi/2 rotations."""
        return max(abs(self.angle0 - np.pi / 2), abs(self.angle1 - np.pi / 2)) / (np.pi / 2)


def axis_angle(u: np.ndarray):
    """Rotation axis and angle in [0, pi] of a 2x2 unitary, global phase removed."""
    su = u / np.sqrt(np.linalg.det(u))
    c = np.real(np.trace(su)) / 2
    # -i sin(a/2) n.sigma part
    n = np.array([
        -np.imag(su[0, 1] + su[1, 0]) / 2,
        np.real(su[1, 0] - su[0, 1]) / 2,
        -np.imag(su[0, 0] - su[1, 1]) / 2,
    ])
    if c < 0:
        c, n = -c, -n
    s = np.linalg.norm(n)
    angle = 2 * math.atan2(s, c)
    axis = n / s if s > 1e-15 else np.array([0.0, 0.0, 1.0])
    return axis, angle


def pair_branch_propagators(pair: CarbonPair, tau: float, n_pulses: int):
    h0, h1 = _pseudo_fields(pair.x, pair.z)
    return branch_pair(su2_exp(h0, tau), su2_exp(h1, tau), n_pulses)


def gate_character(pair: CarbonPair, tau: float, n_pulses: int) -> GateCharacter:
    """Axis-angle form of both branch propagators of a pair's pseudo-spin."""
    u0, u1 = pair_branch_propagators(pair, tau, n_pulses)
    a0, t0 = axis_angle(u0)
    a1, t1 = axis_angle(u1)
    return GateCharacter(a0, t0, a1, t1)


def design_gate(pair: CarbonPair, n_max: int = 64, k: int = 1, tolerance: float = 0.1):
    """(tau, N) at the k-th resonance giving branch rotations of about +-pi/2.

    Returns the smallest even N within ``tolerance`` of pi/2, otherwise the best N.
    """
    tau = round(pair_resonance_taus(pair, k).taus[k - 1] * 1e9) * 1e-9
    errors = {n: gate_character(pair, tau, n).conditional_error()
              for n in range(2, n_max + 1, 2)}
    good = [n for n, e in errors.items() if e <= tolerance]
    return tau, (good[0] if good else min(errors, key=errors.get))


# -- pair spectroscopy -------------------------------------------------------------

_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
_PLUS_Y = np.array([1, 1j], dtype=complex) / np.sqrt(2)


def _controlled(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Electron-conditioned propagator on electron (x) pseudo-spin."""
    c = np.zeros((4, 4), dtype=complex)
    c[:2, :2] = u0
    c[2:, 2:] = u1
    return c


def _pseudo_h(pair: CarbonPair, ms: int, detuning: float = 0.0) -> np.ndarray:
    z = pair.z if ms == -1 else 0.0
    return TWO_PI * (pair.x * SPIN_HALF[0] + (z + detuning) * SPIN_HALF[2])


def simulate_pair_spectroscopy(pair: CarbonPair, ms: int, gate, detuning: float, times,
                               regime: str | None = None) -> Trace:
    """Ramsey measurement of a pair's pseudo-spin through electron-controlled gates.

    Sequence: electron in |+>, entangling DD block, electron projected on +y
    (post-selected), optional H1 quarter-period for Z>>X with m_s = 0, free
    evolution under H_ms plus an artificial detuning about z, mirrored readout
    block (the entangling block inverted, electron entering in +y). Values are
    the probability of finding the electron back in |+>.
    """
    if ms not in (0, -1):
        raise ModelError("pair spectroscopy uses m_s = 0 or -1 during free evolution")
    tau, n_pulses = gate
    regime = regime or regime_classify(pair)
    meta = {"pair": pair.label, "ms": str(ms), "gate": f"tau={tau!r},N={n_pulses}",
            "detuning_Hz": repr(detuning)}
    ch = gate_character(pair, tau, n_pulses)
    if ch.conditional_error() > 0.2:
        meta["warning"] = (f"gate is not a conditional pi/2 rotation "
                           f"(angles {ch.angle0:.3f}, {ch.angle1:.3f} rad)")

    u0, u1 = pair_branch_propagators(pair, tau, n_pulses)
    cu = _controlled(u0, u1)
    proj = np.kron(np.outer(_PLUS_Y, _PLUS_Y.conj()), np.eye(2))

    # initialization by measurement
    rho = cu @ np.kron(np.outer(_PLUS, _PLUS.conj()), np.eye(2) / 2) @ cu.conj().T
    rho = proj @ rho @ proj
    p = np.real(np.trace(rho))
    if p < 1e-12:
        raise ModelError("post-selected branch has zero probability")
    rho = rho / p
    pseudo = rho.reshape(2, 2, 2, 2).trace(axis1=0, axis2=2)

    extra = regime == Z_DOMINANT and ms == 0
    if extra:
        w1 = math.hypot(pair.x, pair.z)
        h1 = _pseudo_h(pair, -1)
        prep = hermitian_exp(h1, 1 / (4 * w1))
        back = hermitian_exp(h1, 3 / (4 * w1))
        pseudo = prep @ pseudo @ prep.conj().T

    t = np.asarray(times, dtype=float)
    evo = hermitian_exp(_pseudo_h(pair, ms, detuning), t)          # (T, 2, 2)
    states = evo @ pseudo @ np.swapaxes(evo.conj(), -1, -2)
    if extra:
        states = back @ states @ back.conj().T

    # readout: the preparation block run backwards, electron starting in +y
    e_in = np.outer(_PLUS_Y, _PLUS_Y.conj())
    joint = np.einsum("ij,tkl->tikjl", e_in, states).reshape(-1, 4, 4)
    joint = cu.conj().T @ joint @ cu
    readout = np.kron(np.outer(_PLUS, _PLUS.conj()), np.eye(2))
    values = np.real(np.einsum("ij,tji->t", readout, joint))
    return Trace(t, values, meta)


# -- frequency-offset robustness -----------------------------------------------------

def revival_offset_robustness(model: EnvironmentModel, delta_omega: float, sigma: float,
                              repetitions: int, n_pulses: int, taus_ns, seed: int = 0,
                              apply_envelope: bool = False, return_draws: bool = False,
                              include_pairs: bool = False,
                              constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Average decoupling curve when each carbon's m_s = 0 frequency is random.

    Every repetition draws omega0 ~ Normal(omega_L - delta_omega, sigma) for each
    isolated carbon. The mean over repetitions is returned as a Trace (and the
    per-draw curves with ``return_draws``). Pairs are left out unless asked
    for, since their dips do not depend on the draws.
    """
    if repetitions < 1:
        raise ModelError("need at least one repetition")
    rng = np.random.Generator(np.random.Philox(seed))
    w_l = larmor_frequency(model.field, constants)
    n_c = len(model.carbons)
    draws = w_l - delta_omega + sigma * rng.standard_normal((repetitions, n_c))
    curves = dd_sweep(model, n_pulses, taus_ns, apply_envelope=apply_envelope,
                      include_bath=False, include_pairs=include_pairs, carbon_omega0=draws,
                      constants=constants)
    curves = np.broadcast_to(curves, (repetitions, len(taus_ns)))
    taus_ns = np.asarray(taus_ns, dtype=np.int64)
    meta = {"delta_omega_Hz": repr(delta_omega), "sigma_Hz": repr(sigma),
            "repetitions": str(repetitions), "seed": str(seed),
            "rng": "numpy.random.Philox", "N": str(n_pulses)}
    mean = Trace(taus_ns * 1e-9, curves.mean(axis=0), meta)
    return (mean, curves) if return_draws else mean


# -- schedule synthesis ----------------------------------------------------------------

def _on_revival_grid(tau_ns: np.ndarray, field: FieldConfig, constants) -> np.ndarray:
    tl = 1e9 / larmor_frequency(field, constants)
    m = np.maximum(np.round(tau_ns / tl), 1)
    return np.round(m * tl) == tau_ns


def tau_window_scan(model: EnvironmentModel, target_tau_ns: int, n_pulses: int,
                    window_ns: int = 20, step_ns: int = 1, tie_tol: float = 1e-12,
                    avoid=(), avoid_rel: float = 0.01,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> int:
    """Best tau (ns) within +-window/2 of a target, judged on the modulation product.

    The envelope is left out: across a few ns it only adds a monotone drift.
    Candidates within ``avoid_rel`` of any tau in ``avoid`` (s) are dropped
    unless that empties the window. Ties go to revival-grid points, then to
    the smaller tau.
    """
    if window_ns < step_ns:
        raise ModelError("window must be at least one step")
    lo = math.ceil(target_tau_ns - window_ns / 2)
    hi = math.floor(target_tau_ns + window_ns / 2)
    cand = np.arange(lo, hi + 1, step_ns, dtype=np.int64)
    cand = cand[cand >= 1]
    if cand.size == 0:
        raise ModelError("no tau >= 1 ns inside the scan window")
    if len(avoid):
        near = np.abs(cand[:, None] * 1e-9 / np.asarray(avoid, dtype=float)[None, :] - 1)
        clear = ~np.any(near < avoid_rel, axis=1)
        if np.any(clear):
            cand = cand[clear]
    f = dd_sweep(model, n_pulses, cand, apply_envelope=False, constants=constants)
    on_grid = _on_revival_grid(cand, model.field, constants)
    best = np.max(f)
    tied = np.flatnonzero(f >= best - tie_tol)
    order = sorted(tied, key=lambda i: (not on_grid[i], cand[i]))
    return int(cand[order[0]])


@dataclass(frozen=True)
class ScalingLaw:
    t_ref: float          # coherence time at N = 4 (s)
    eta: float

    def __post_init__(self):
        if not self.t_ref > 0:
            raise ModelError("t_ref must be positive")

    def __call__(self, n_pulses):
        return self.t_ref * (np.asarray(n_pulses, dtype=float) / 4) ** self.eta


@dataclass(frozen=True)
class TailoredSchedule:
    n_pulses: int
    tau_ns: int
    predicted_fidelity: float
    avoided: tuple = dc_field(default=())

    @property
    def tau(self) -> float:
        return self.tau_ns * 1e-9

    def to_record(self) -> dict:
        return {"n_pulses": self.n_pulses, "tau_s": self.tau, "tau_ns": self.tau_ns,
                "predicted_fidelity": self.predicted_fidelity,
                "avoided": [{"source": s, "distance_s": d} for s, d in self.avoided]}


def resonance_distances(model: EnvironmentModel, tau: float, k_max: int = 50,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list:
    """(label, distance in s to the nearest modeled resonance) for pairs and carbons."""
    out = []
    for p in model.pairs:
        taus = np.array(pair_resonance_taus(p, k_max).taus)
        out.append((p.label, float(np.min(np.abs(taus - tau)))))
    for c in model.carbons:
        taus = np.array(single_spin_resonance_taus(c.a_par, c.a_perp, model.field, k_max,
                                                   constants))
        out.append((c.label, float(np.min(np.abs(taus - tau)))))
    return out


def tailor_sequence(model: EnvironmentModel, t_target: float, n_candidates: Sequence[int],
                    scaling: ScalingLaw | None = None, window_ns: int = 20,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> TailoredSchedule:
    """Pick N and tau for a storage time ``t_target`` that maximize the predicted fidelity.

    For each candidate N, tau = t_target / 2N is snapped to the revival grid and
    refined with ``tau_window_scan``, which steers clear (1%) of pair resonances
    when the window allows. The envelope uses the model amplitude and
    exponent with T(N) from ``scaling`` (the model's T when no scaling is given).
    Candidates are scored in the given order; exact ties keep the earlier one.
    """
    if not t_target > 0:
        raise ModelError("target time must be positive")
    if len(n_candidates) == 0:
        raise ModelError("no pulse-number candidates")
    tl_ns = 1e9 / larmor_frequency(model.field, constants)
    env = model.envelope
    # pair resonances reachable from the longest tau considered
    k_max = int(t_target / (2 * min(n_candidates)) * 4 * max(
        (pair_resonance_taus(p, 1).omega for p in model.pairs), default=0.0)) // 2 + 2
    avoid = [t for p in model.pairs for t in pair_resonance_taus(p, k_max).taus]
    best = None
    for n in n_candidates:
        raw = t_target / (2 * n) * 1e9
        m = round(raw / tl_ns)
        target = int(round(m * tl_ns)) if m >= 1 else int(round(raw))
        if target < 1:
            continue
        tau_ns = tau_window_scan(model, target, n, window_ns=window_ns, avoid=avoid,
                                 constants=constants)
        factor = dd_sweep(model, n, [tau_ns], apply_envelope=False, constants=constants)[0]
        factor = 2 * (factor - 0.5)
        t_coh = env.t_coh if scaling is None else float(scaling(n))
        t = 2 * n * tau_ns * 1e-9
        fid = 0.5 + env.amplitude * factor * math.exp(-((t / t_coh) ** env.exponent))
        if best is None or fid > best[0]:
            best = (fid, n, tau_ns)
    if best is None:
        raise ModelError(f"no candidate N gives tau >= 1 ns for t = {t_target} s")
    fid, n, tau_ns = best
    return TailoredSchedule(n, tau_ns, float(fid),
                            tuple(resonance_distances(model, tau_ns * 1e-9, constants=constants)))
