"""
Conditional propagators for dynamical decoupling.

A nuclear system evolves under ``H0`` while the electron is in m_s = 0 and
under ``H1`` while it is in m_s = -1. Instantaneous pi pulses toggle which
Hamiltonian applies. Each constituent of the environment contributes a
modulation factor built from ``Re Tr(U0 U1^dagger)``.

Everything here works on stacked arrays so that sweeps over tau (and over
random frequency draws) are single numpy calls.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (DEFAULT_CONSTANTS, CarbonPair, DDSequence, EnvironmentModel, FieldConfig,
                    ModelError, PhysicalConstants, SingleCarbon, Trace, larmor_frequency,
                    single_spin_split_frequencies)

TWO_PI = 2 * np.pi
RENORMALIZE_EVERY = 1024

_PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
SPIN_HALF = _PAULI / 2


@dataclass(frozen=True)
class Hamiltonian2:
    """h . S + offset for a spin-1/2, angular units (rad/s)."""

    h_x: float = 0.0
    h_y: float = 0.0
    h_z: float = 0.0
    offset: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.h_x, self.h_y, self.h_z], dtype=float)

    def matrix(self) -> np.ndarray:
        return np.einsum("a,aij->ij", self.vector, SPIN_HALF) + self.offset * np.eye(2)


# -- closed-form SU(2) ---------------------------------------------------------

def su2_exp(h, t) -> np.ndarray:
    """exp(-i (h . S) t) for stacked field vectors ``h`` (..., 3) and times ``t`` (...)."""
    h = np.asarray(h, dtype=float)
    t = np.asarray(t, dtype=float)
    norm = np.linalg.norm(h, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    n = h / safe[..., None]
    phi = norm * t / 2
    c, s = np.cos(phi), np.sin(phi)
    nx, ny, nz = np.broadcast_arrays(n[..., 0], n[..., 1], n[..., 2])
    c, s, nx, ny, nz = np.broadcast_arrays(c, s, nx, ny, nz)
    u = np.empty(c.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * nz
    u[..., 0, 1] = -1j * s * nx - s * ny
    u[..., 1, 0] = -1j * s * nx + s * ny
    u[..., 1, 1] = c + 1j * s * nz
    return u


def su2_exponential(h: Hamiltonian2, t: float) -> np.ndarray:
    if t < 0:
        raise ModelError("evolution time must be non-negative")
    return su2_exp(h.vector, t) * np.exp(-1j * h.offset * t)


def hermitian_exp(H: np.ndarray, t) -> np.ndarray:
    """exp(-i H t) for stacked Hermitian matrices, via eigendecomposition."""
    w, v = np.linalg.eigh(H)
    phase = np.exp(-1j * w * np.asarray(t, dtype=float)[..., None])
    return (v * phase[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def polar_unitary(u: np.ndarray) -> np.ndarray:
    """Nearest unitary (polar factor) of stacked matrices."""
    w, _, vh = np.linalg.svd(u)
    return w @ vh


# -- branch propagators ----------------------------------------------------------

def _power(a: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape).copy()
    return np.linalg.matrix_power(a, k)


def branch_pair(e0: np.ndarray, e1: np.ndarray, n_pulses: int):
    """Branch propagators (U0, U1) from the per-tau evolutions ``e0``, ``e1``.

    One pulse unit starting in branch b is ``tau`` under H_b, a pulse, then ``tau``
    under the other Hamiltonian. Units alternate their starting branch, so the
    sequence is a power of the two-unit block times at most one extra unit.
    """
    a0 = e1 @ e0          # unit entered in m_s = 0
    a1 = e0 @ e1
    half, odd = divmod(n_pulses, 2)
    u0 = _power(a1 @ a0, half)
    u1 = _power(a0 @ a1, half)
    if odd:
        u0 = a0 @ u0
        u1 = a1 @ u1
    return u0, u1


def iterative_branch_pair(e0: np.ndarray, e1: np.ndarray, n_pulses: int):
    """Pulse-by-pulse construction of (U0, U1); reference path for ``branch_pair``."""
    evo = (e0, e1)
    out = []
    for start in (0, 1):
        u = np.eye(e0.shape[-1], dtype=complex)
        b = start
        count = 0
        for _ in range(n_pulses):
            u = evo[b] @ u
            b ^= 1
            u = evo[b] @ u
            count += 2
            if count % RENORMALIZE_EVERY == 0:
                u = polar_unitary(u)
        out.append(u)
    return out[0], out[1]


def dd_branch_propagators(h0: Hamiltonian2, h1: Hamiltonian2, seq: DDSequence,
                          iterative: bool = False):
    """Conditional propagators (U0, U1) of a two-level nuclear system under ``seq``."""
    e0 = su2_exponential(h0, seq.tau)
    e1 = su2_exponential(h1, seq.tau)
    if iterative:
        return iterative_branch_pair(e0, e1, seq.n_pulses)
    return branch_pair(e0, e1, seq.n_pulses)


def re_trace_overlap(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Re Tr(U0 U1^dagger), stacked."""
    return np.einsum("...ij,...ij->...", u0, u1.conj()).real


def _pair_coherence(h0, h1, n_pulses: int, taus) -> np.ndarray:
    """Re Tr(U0 U1^dagger) for 2-level branch fields h0, h1 (..., 3) over taus (...)."""
    u0, u1 = branch_pair(su2_exp(h0, taus), su2_exp(h1, taus), n_pulses)
    return re_trace_overlap(u0, u1)


# -- modulation factors ----------------------------------------------------------

def _single_fields(a_par, a_perp, omega0):
    """Angular branch fields of a single 13C: h0 = w0 Iz, h1 = (w0 - A_par) Iz + A_perp Ix."""
    a_par, a_perp, omega0 = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                  for v in (a_par, a_perp, omega0)))
    zero = np.zeros_like(a_par)
    h0 = TWO_PI * np.stack([zero, zero, omega0], axis=-1)
    h1 = TWO_PI * np.stack([a_perp, zero, omega0 - a_par], axis=-1)
    return h0, h1


def single_spin_modulation_batch(a_par, a_perp, omega0, n_pulses: int, taus) -> np.ndarray:
    """Coherence factors in [-1, 1] for broadcastable spin parameters and taus (s)."""
    h0, h1 = _single_fields(a_par, a_perp, omega0)
    return _pair_coherence(h0, h1, n_pulses, taus) / 2


def single_spin_modulation(spin: SingleCarbon, field: FieldConfig, seq: DDSequence,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS,
                           omega0: float | None = None) -> float:
    """Re Tr(U0 U1^dagger)/2 for one isolated 13C."""
    w0 = larmor_frequency(field, constants) if omega0 is None else omega0
    return float(single_spin_modulation_batch(spin.a_par, spin.a_perp, w0,
                                              seq.n_pulses, seq.tau))


def _pseudo_fields(x, z):
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    zero = np.zeros_like(x)
    h0 = TWO_PI * np.stack([x, zero, zero], axis=-1)
    h1 = TWO_PI * np.stack([x, zero, z], axis=-1)
    return h0, h1


def pair_modulation_batch(x, z, n_pulses: int, taus) -> np.ndarray:
    h0, h1 = _pseudo_fields(x, z)
    return 0.5 + _pair_coherence(h0, h1, n_pulses, taus) / 4


def pair_modulation(pair: CarbonPair, seq: DDSequence) -> float:
    """1/2 + Re Tr(U0 U1^dagger)/4 for the pseudo-spin of a 13C pair.

    The 1/2 is the parallel-spin subspace, which does not dephase the electron.
    """
    return float(pair_modulation_batch(pair.x, pair.z, seq.n_pulses, seq.tau))


# -- exact two-nucleus oracle ----------------------------------------------------

_I1 = np.array([np.kron(s, np.eye(2)) for s in SPIN_HALF])
_I2 = np.array([np.kron(np.eye(2), s) for s in SPIN_HALF])


def two_spin_hamiltonians(spin1: SingleCarbon, spin2: SingleCarbon, coupling_tensor,
                          omega0: float):
    """Angular 4x4 branch Hamiltonians (H0, H1) of two nuclei with a full dipolar tensor."""
    d = np.asarray(coupling_tensor)
    if d.shape != (3, 3) or not np.all(np.isfinite(d)):
        raise ModelError("coupling tensor must be a finite 3x3 array")
    if np.iscomplexobj(d) and np.max(np.abs(d.imag)) > 0:
        raise ModelError("coupling tensor must be real for a Hermitian interaction")
    d = np.real(d)
    h_nn = TWO_PI * np.einsum("ab,aij,bjk->ik", d, _I1, _I2)
    h0 = h_nn + TWO_PI * omega0 * (_I1[2] + _I2[2])
    h1 = h_nn.copy()
    for ops, s in ((_I1, spin1), (_I2, spin2)):
        h1 = h1 + TWO_PI * ((omega0 - s.a_par) * ops[2] + s.a_perp * ops[0])
    return h0, h1


def exact_pair_oracle_batch(spin1, spin2, coupling_tensor, field: FieldConfig, n_pulses: int,
                            taus, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    h0, h1 = two_spin_hamiltonians(spin1, spin2, coupling_tensor,
                                   larmor_frequency(field, constants))
    taus = np.asarray(taus, dtype=float)
    u0, u1 = branch_pair(hermitian_exp(h0, taus), hermitian_exp(h1, taus), n_pulses)
    return re_trace_overlap(u0, u1) / 4


def exact_pair_oracle(spin1: SingleCarbon, spin2: SingleCarbon, coupling_tensor,
                      field: FieldConfig, seq: DDSequence,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Electron coherence factor from the full two-nucleus problem.

    Re Tr(U0 U1^dagger)/4 over the 4-dim nuclear space (infinite-temperature
    average). With the coupling switched off it factorizes into the product of
    the two single-spin factors; for a pseudo-spin dominated pair it matches
    ``pair_modulation``.
    """
    return float(exact_pair_oracle_batch(spin1, spin2, coupling_tensor, field,
                                         seq.n_pulses, seq.tau, constants))


def pair_as_two_spins(pair: CarbonPair, field: FieldConfig, a_perp: float = 2e3,
                      a_par_ref: float = 5e3,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Two nuclei and a dipolar tensor reproducing a pair's (X, Z).

    Both nuclei get the same perpendicular hyperfine; the parallel hyperfine of the
    first is solved so that the m_s = -1 precession frequencies differ by Z. The
    tensor has the pair's lattice geometry (axial if none is given), scaled so its
    flip-flop term equals X.
    """
    from .lattice import dipolar_coupling, dipolar_tensor

    w0 = larmor_frequency(field, constants)
    w_ref = math.hypot(w0 - a_par_ref, a_perp)
    w_target = w_ref + pair.z
    a_par = w0 - math.sqrt(w_target ** 2 - a_perp ** 2)
    s1 = SingleCarbon(f"{pair.label}a", a_par=a_par, a_perp=a_perp)
    s2 = SingleCarbon(f"{pair.label}b", a_par=a_par_ref, a_perp=a_perp)
    if pair.geometry is None:
        tensor = pair.x * np.diag([1.0, 1.0, -2.0])
    else:
        tensor = dipolar_tensor(pair.geometry, field, constants)
        tensor = tensor * abs(pair.x) / abs(dipolar_coupling(pair.geometry, field, constants))
    return s1, s2, tensor


# -- total signal ----------------------------------------------------------------

def _product_factor(model: EnvironmentModel, n_pulses: int, taus: np.ndarray,
                    include_carbons: bool, include_bath: bool, carbon_omega0=None,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS,
                    include_pairs: bool = True) -> np.ndarray:
    """Product of all modulation factors; ``taus`` has shape (T,)."""
    w0 = larmor_frequency(model.field, constants)
    total = np.ones(taus.shape)

    if include_pairs and model.pairs:
        x = np.array([p.x for p in model.pairs])[:, None]
        z = np.array([p.z for p in model.pairs])[:, None]
        total = total * np.prod(pair_modulation_batch(x, z, n_pulses, taus[None, :]), axis=0)

    if include_carbons and model.carbons:
        a_par = np.array([c.a_par for c in model.carbons])
        a_perp = np.array([c.a_perp for c in model.carbons])
        if carbon_omega0 is None:
            om = np.full(a_par.shape, w0)
        else:
            om = np.asarray(carbon_omega0, dtype=float)
        # om: (..., n_carbons) -> factors (..., n_carbons, T)
        m = single_spin_modulation_batch(a_par[:, None], a_perp[:, None], om[..., None],
                                         n_pulses, taus)
        total = total * np.prod(m, axis=-2)

    if include_bath and model.bath:
        a_par = np.array([c.a_par for c in model.bath])[:, None]
        a_perp = np.array([c.a_perp for c in model.bath])[:, None]
        total = total * np.prod(single_spin_modulation_batch(a_par, a_perp, w0, n_pulses,
                                                             taus[None, :]), axis=0)
    return total


def combine_signal(factor, t, envelope, apply_envelope: bool = True):
    """F = 1/2 + A * factor * exp(-(t/T)^n); without the envelope A = 1/2 and no decay."""
    if apply_envelope:
        return 0.5 + envelope(t) * factor
    return 0.5 + 0.5 * factor


def dd_sweep(model: EnvironmentModel, n_pulses: int, taus_ns, *, apply_envelope: bool = True,
             include_carbons: bool = True, include_bath: bool = True, include_pairs: bool = True,
             carbon_omega0=None, threads: int = 1,
             constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Total decoupling signal F for each tau (integer ns) at fixed pulse count.

    ``carbon_omega0`` optionally overrides the m_s = 0 precession frequency of the
    isolated carbons, shape (n_carbons,) or (R, n_carbons) for R independent draws
    (result then has shape (R, T)). Grid points are independent, so splitting the
    grid across ``threads`` workers gives identical numbers.
    """
    taus_ns = np.asarray(taus_ns)
    if taus_ns.ndim != 1:
        raise ModelError("tau grid must be one-dimensional")
    if np.any(taus_ns < 1) or np.any(taus_ns != np.round(taus_ns)):
        raise ModelError("tau grid must hold integers >= 1 ns")
    taus = taus_ns.astype(np.int64) * 1e-9

    def work(chunk):
        f = _product_factor(model, n_pulses, taus[chunk], include_carbons, include_bath,
                            carbon_omega0, constants, include_pairs)
        return combine_signal(f, 2 * n_pulses * taus[chunk], model.envelope, apply_envelope)

    if threads <= 1 or taus.size < 2:
        return work(slice(None))
    bounds = np.linspace(0, taus.size, min(threads, taus.size) + 1).astype(int)
    chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(work, chunks))
    return np.concatenate(parts, axis=-1)


def total_dd_signal(model: EnvironmentModel, seq: DDSequence, apply_envelope: bool = True,
                    include_bath: bool = True, include_carbons: bool = True,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Electron fidelity after ``seq`` for the full environment model."""
    return float(dd_sweep(model, seq.n_pulses, [seq.tau_ns], apply_envelope=apply_envelope,
                          include_carbons=include_carbons, include_bath=include_bath,
                          constants=constants)[0])


def dd_trace(model: EnvironmentModel, n_pulses: int, taus_ns, **kwargs) -> Trace:
    """``dd_sweep`` packaged as a Trace over total time 2 N tau."""
    taus_ns = np.asarray(taus_ns, dtype=np.int64)
    values = dd_sweep(model, n_pulses, taus_ns, **kwargs)
    meta = {"sequence": f"({n_pulses} pulses, XY8)", "model_hash": model.digest(),
            "N": str(n_pulses)}
    return Trace(2 * n_pulses * taus_ns * 1e-9, values, meta)


# -- Ramsey ----------------------------------------------------------------------

def ramsey_trace(spin: SingleCarbon, ms: int, detuning: float, t2_star: float | None, times,
                 field: FieldConfig, frequency: float | None = None,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS) -> Trace:
    """Nuclear Ramsey fringe 1/2 + 1/2 exp(-(t/T2*)^2) cos(2 pi (f + detuning) t).

    ``frequency`` overrides the precession frequency computed from the hyperfine
    parameters (e.g. to use a measured value).
    """
    if ms not in (0, -1, 1):
        raise ModelError(f"m_s must be 0, -1 or +1, got {ms}")
    if frequency is None:
        w0, w1 = single_spin_split_frequencies(spin, field, constants)
        frequency = {0: w0, -1: w1, 1: math.hypot(w0 + spin.a_par, spin.a_perp)}[ms]
    t2 = spin.t2_star if t2_star is None else t2_star
    t = np.asarray(times, dtype=float)
    decay = np.ones_like(t) if t2 is None else np.exp(-(t / t2) ** 2)
    values = 0.5 + 0.5 * decay * np.cos(TWO_PI * (frequency + detuning) * t)
    return Trace(t, values, {"spin": spin.label, "ms": str(ms), "f_Hz": repr(frequency)})
