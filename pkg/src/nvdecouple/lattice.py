"""
Diamond-lattice geometry for 13C-13C pairs and random 13C baths.

Lattice vectors are integer triples in units of a0/4. A displacement between
two carbon sites is either all-odd (sites on different FCC sublattices) or
all-even with component sum divisible by 4 (same sublattice).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_CONSTANTS, FieldConfig, ModelError, PhysicalConstants, SingleCarbon

NATURAL_ABUNDANCE = 0.011
RNG_ALGORITHM = "numpy.random.Philox"
_DEFAULT_FIELD = FieldConfig(b_z=403.553)


def is_lattice_displacement(r_vec) -> bool:
    v = [int(c) for c in r_vec]
    if all(c % 2 for c in v):
        return True
    return all(c % 2 == 0 for c in v) and sum(v) % 4 == 0 and any(v)


def _as_vec(r_vec) -> np.ndarray:
    v = np.asarray(r_vec, dtype=float)
    if v.shape != (3,) or not np.any(v):
        raise ModelError(f"lattice vector must be a non-zero 3-vector, got {r_vec!r}")
    return v


def pair_geometry(r_vec, field: FieldConfig = _DEFAULT_FIELD):
    """Separation in units of a0 and angle (degrees, 0..180) to the field axis."""
    v = _as_vec(r_vec)
    norm = np.linalg.norm(v)
    cos = np.clip(v @ field.axis / norm, -1.0, 1.0)
    return norm / 4, math.degrees(math.acos(cos))


def dipolar_prefactor(constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """mu0/4pi * h * gamma_c**2 in Hz m^3."""
    return constants.mu0_over_4pi * constants.planck * constants.gamma_c_si ** 2


def dipolar_coupling(r_vec, field: FieldConfig = _DEFAULT_FIELD,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Signed flip-flop coupling X (Hz) of a 13C pair separated by ``r_vec``."""
    v = _as_vec(r_vec)
    r = np.linalg.norm(v) * constants.a0 / 4
    cos = v @ field.axis / np.linalg.norm(v)
    return dipolar_prefactor(constants) / r ** 3 * 0.5 * (1 - 3 * cos ** 2)


def field_frame(field: FieldConfig) -> np.ndarray:
    """Rows are the x, y, z unit vectors of a frame whose z axis is the field axis."""
    ez = field.axis
    trial = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    ex = trial - (trial @ ez) * ez
    ex /= np.linalg.norm(ex)
    return np.array([ex, np.cross(ez, ex), ez])


def dipolar_tensor(r_vec, field: FieldConfig = _DEFAULT_FIELD,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Full nuclear-nuclear dipolar tensor D (Hz, field frame): H = sum_ab D_ab I1_a I2_b."""
    v = _as_vec(r_vec)
    r = np.linalg.norm(v) * constants.a0 / 4
    n = field_frame(field) @ (v / np.linalg.norm(v))
    return dipolar_prefactor(constants) / r ** 3 * (np.eye(3) - 3 * np.outer(n, n))


@dataclass(frozen=True)
class PairClass:
    r_vec: tuple
    r: float
    theta: float
    x_over_2pi: float

    def matches(self, r_vec, field: FieldConfig = _DEFAULT_FIELD) -> bool:
        """True if ``r_vec`` belongs to this symmetry class."""
        r, theta = pair_geometry(r_vec, field)
        return abs(r - self.r) < 5e-3 and abs(min(theta, 180 - theta) - self.theta) < 0.05


def _canonical(vectors: np.ndarray, axis: np.ndarray) -> tuple:
    dots = vectors @ axis
    flipped = np.where((dots < 0)[:, None], -vectors, vectors)
    return max(tuple(int(c) for c in v) for v in flipped)


def _candidate_vectors(r_max_quarter: int) -> np.ndarray:
    rng = np.arange(-r_max_quarter, r_max_quarter + 1)
    g = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    odd = np.all(g % 2 == 1, axis=1)
    even = np.all(g % 2 == 0, axis=1) & (g.sum(axis=1) % 4 == 0)
    g = g[(odd | even) & np.any(g != 0, axis=1)]
    return g[np.einsum("ij,ij->i", g, g) <= r_max_quarter ** 2]


def enumerate_pair_classes(x_min: float, field: FieldConfig = _DEFAULT_FIELD,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list[PairClass]:
    """All pair classes with |X| >= x_min, strongest first.

    Vectors are grouped by (r, folded theta) rounded to 0.01 a0 and 0.1 degree;
    |X| depends on nothing else.
    """
    if not x_min > 0:
        raise ModelError("x_min must be positive")
    r_max = (dipolar_prefactor(constants) / x_min) ** (1 / 3)      # |1-3cos^2|/2 <= 1
    r_max_quarter = int(math.floor(4 * r_max / constants.a0)) + 1
    vecs = _candidate_vectors(r_max_quarter)
    axis = field.axis

    norms = np.linalg.norm(vecs, axis=1)
    cos = np.clip(vecs @ axis / norms, -1, 1)
    x = dipolar_prefactor(constants) / (norms * constants.a0 / 4) ** 3 * 0.5 * (1 - 3 * cos ** 2)
    keep = np.abs(x) >= x_min
    vecs, norms, cos, x = vecs[keep], norms[keep], cos[keep], x[keep]
    theta = np.degrees(np.arccos(np.abs(cos)))

    groups: dict = {}
    for i, key in enumerate(zip(np.round(norms / 4, 2), np.round(theta, 1))):
        groups.setdefault(key, []).append(i)

    classes = []
    for idx in groups.values():
        i = idx[0]
        classes.append(PairClass(
            r_vec=_canonical(vecs[idx], axis),
            r=float(norms[i] / 4),
            theta=float(theta[i]),
            x_over_2pi=float(abs(x[i])),
        ))
    classes.sort(key=lambda c: (-c.x_over_2pi, c.r, c.theta))
    return classes


def assign_structure(x_measured: float, tolerance: float, field: FieldConfig = _DEFAULT_FIELD,
                     classes: list[PairClass] | None = None,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list[PairClass]:
    """Pair classes whose |X| lies within ``tolerance`` (relative) of a measured coupling."""
    if not x_measured > 0:
        raise ModelError("measured coupling must be positive")
    if classes is None:
        classes = enumerate_pair_classes(x_measured * (1 - tolerance), field, constants)
    hits = [c for c in classes if abs(c.x_over_2pi - x_measured) <= tolerance * x_measured]
    return sorted(hits, key=lambda c: abs(c.x_over_2pi - x_measured))


# -- random bath -----------------------------------------------------------------

@dataclass(frozen=True)
class BathConfig:
    seed: int
    count: int = 200
    coupling_cutoff: float = 10e3     # Hz
    shell: tuple = (1.5, 6.0)         # nm

    def __post_init__(self):
        if self.count <= 0:
            raise ModelError("bath count must be positive")
        if not self.coupling_cutoff > 0:
            raise ModelError("coupling cutoff must be positive")
        if not 0 <= self.shell[0] < self.shell[1]:
            raise ModelError(f"shell radii must satisfy r_min < r_max, got {self.shell}")


def lattice_sites(r_min_m: float, r_max_m: float, a0: float) -> np.ndarray:
    """Carbon sites (a0/4 units) in a spherical shell around a vacancy at the origin."""
    n = int(math.ceil(4 * r_max_m / a0))
    rng = np.arange(-n, n + 1, dtype=np.int32)
    g = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    s = g.sum(axis=1)
    fcc = np.all(g % 2 == 0, axis=1) & (s % 4 == 0)
    shifted = np.all(g % 2 == 1, axis=1) & (s % 4 == 3)
    g = g[fcc | shifted]
    r = np.linalg.norm(g, axis=1) * a0 / 4
    return g[(r >= r_min_m) & (r <= r_max_m)]


def point_dipole_hyperfine(sites: np.ndarray, field: FieldConfig,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Parallel and perpendicular electron-13C couplings (Hz) of lattice sites."""
    pos = np.asarray(sites, dtype=float) * constants.a0 / 4
    r = np.linalg.norm(pos, axis=1)
    cos = pos @ field.axis / r
    sin = np.sqrt(np.clip(1 - cos ** 2, 0, None))
    pref = (constants.mu0_over_4pi * constants.planck * constants.gamma_e_si
            * constants.gamma_c_si / r ** 3)
    return pref * (3 * cos ** 2 - 1), np.abs(pref * 3 * cos * sin)


def generate_bath(config: BathConfig, field: FieldConfig = _DEFAULT_FIELD,
                  constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list[SingleCarbon]:
    """Sample a weakly coupled 13C bath; a pure function of its arguments."""
    rng = np.random.Generator(np.random.Philox(config.seed))
    sites = lattice_sites(config.shell[0] * 1e-9, config.shell[1] * 1e-9, constants.a0)
    occupied = sites[rng.random(len(sites)) < NATURAL_ABUNDANCE]
    a_par, a_perp = point_dipole_hyperfine(occupied, field, constants)
    ok = np.hypot(a_par, a_perp) < config.coupling_cutoff
    n_ok = int(ok.sum())
    if n_ok < config.count:
        raise ModelError(
            f"bath shell {config.shell} nm yields only {n_ok} spins below "
            f"{config.coupling_cutoff:g} Hz; {config.count - n_ok} short of {config.count}")
    idx = np.sort(rng.choice(np.flatnonzero(ok), size=config.count, replace=False))
    return [SingleCarbon(label=f"B{k:04d}", a_par=float(a_par[i]), a_perp=float(a_perp[i]))
            for k, i in enumerate(idx)]
