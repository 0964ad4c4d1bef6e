"""
Domain records shared by every other module.

Units
-----
- Frequencies and couplings: linear Hz. Angular values (rad/s) only exist
  transiently inside propagator code.
- Magnetic field: Gauss.
- Times: seconds, except ``DDSequence.tau_ns`` which is an integer number of
  nanoseconds (the hardware timing grid).
- Lattice vectors: units of a0/4.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Mapping

import numpy as np


class ModelError(ValueError):
    """Raised when a domain record violates one of its invariants."""


@dataclass(frozen=True)
class PhysicalConstants:
    gamma_c: float = 1.0705e3        # Hz/G
    gamma_e: float = 2.8024e6        # Hz/G
    a0: float = 3.5668e-10           # m
    zfs: float = 2.877623e9          # Hz
    mu0_over_4pi: float = 1e-7       # T m / A
    planck: float = 6.62607015e-34   # J s

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ModelError(f"constant {name} must be positive, got {value}")

    @property
    def gamma_c_si(self) -> float:
        """13C gyromagnetic ratio in Hz/T."""
        return self.gamma_c * 1e4

    @property
    def gamma_e_si(self) -> float:
        return self.gamma_e * 1e4


DEFAULT_CONSTANTS = PhysicalConstants()
_AXIS_111 = (1 / math.sqrt(3),) * 3


@dataclass(frozen=True)
class FieldConfig:
    b_z: float
    b_x: float = 0.0
    b_direction: tuple = _AXIS_111

    def __post_init__(self):
        if not (math.isfinite(self.b_z) and self.b_z > 0):
            raise ModelError(f"b_z must be > 0 G, got {self.b_z}")
        if not self.b_x >= 0:
            raise ModelError(f"b_x must be >= 0 G, got {self.b_x}")
        d = tuple(float(c) for c in self.b_direction)
        if len(d) != 3 or abs(math.sqrt(sum(c * c for c in d)) - 1.0) > 1e-12:
            raise ModelError(f"b_direction must be a unit 3-vector, got {self.b_direction}")
        object.__setattr__(self, "b_direction", d)

    @property
    def axis(self) -> np.ndarray:
        return np.asarray(self.b_direction)


@dataclass(frozen=True)
class SingleCarbon:
    label: str
    a_par: float
    a_perp: float
    tensor: tuple | None = None      # 3x3 rows, Hz, field frame
    t2_star: float | None = None

    def __post_init__(self):
        if self.tensor is not None:
            t = tuple(tuple(float(v) for v in row) for row in self.tensor)
            if len(t) != 3 or any(len(row) != 3 for row in t):
                raise ModelError(f"{self.label}: hyperfine tensor must be 3x3")
            object.__setattr__(self, "tensor", t)

    def secular_mismatch(self) -> float:
        """Largest deviation (Hz) between the tensor's secular part and (a_par, a_perp)."""
        if self.tensor is None:
            return 0.0
        t = self.tensor
        return max(abs(t[2][2] - self.a_par), abs(math.hypot(t[2][0], t[2][1]) - self.a_perp))


@dataclass(frozen=True)
class CarbonPair:
    label: str
    x: float
    z: float
    z_par: float | None = None
    z_perp: float | None = None
    geometry: tuple | None = None

    def __post_init__(self):
        if self.geometry is not None:
            object.__setattr__(self, "geometry", tuple(int(v) for v in self.geometry))


@dataclass(frozen=True)
class Envelope:
    amplitude: float = 0.5
    t_coh: float = 1.0
    exponent: float = 2.0

    def __call__(self, t):
        return self.amplitude * np.exp(-((np.asarray(t) / self.t_coh) ** self.exponent))


@dataclass(frozen=True)
class EnvironmentModel:
    field: FieldConfig
    carbons: tuple = ()
    pairs: tuple = ()
    bath: tuple = ()
    envelope: Envelope = Envelope()

    def __post_init__(self):
        for name in ("carbons", "pairs", "bath"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def with_(self, **changes) -> "EnvironmentModel":
        return replace(self, **changes)

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        f = self.field
        return {
            "field": {"b_z": f.b_z, "b_x": f.b_x, "b_direction": list(f.b_direction)},
            "carbons": [_carbon_dict(c) for c in self.carbons],
            "pairs": [_pair_dict(p) for p in self.pairs],
            "bath": [_carbon_dict(c) for c in self.bath],
            "envelope": {
                "amplitude": self.envelope.amplitude,
                "t_coh": self.envelope.t_coh,
                "exponent": self.envelope.exponent,
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnvironmentModel":
        try:
            fd = d["field"]
            fld = FieldConfig(
                b_z=float(fd["b_z"]),
                b_x=float(fd.get("b_x", 0.0)),
                b_direction=tuple(fd.get("b_direction", _AXIS_111)),
            )
            env = d.get("envelope", {})
            return cls(
                field=fld,
                carbons=[SingleCarbon(**c) for c in d.get("carbons", [])],
                pairs=[CarbonPair(**p) for p in d.get("pairs", [])],
                bath=[SingleCarbon(**c) for c in d.get("bath", [])],
                envelope=Envelope(**env),
            )
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "EnvironmentModel":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """Short content hash used to tag outputs."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _carbon_dict(c: SingleCarbon) -> dict:
    d = {"label": c.label, "a_par": c.a_par, "a_perp": c.a_perp}
    if c.tensor is not None:
        d["tensor"] = [list(row) for row in c.tensor]
    if c.t2_star is not None:
        d["t2_star"] = c.t2_star
    return d


def _pair_dict(p: CarbonPair) -> dict:
    d = {"label": p.label, "x": p.x, "z": p.z}
    for key in ("z_par", "z_perp"):
        if getattr(p, key) is not None:
            d[key] = getattr(p, key)
    if p.geometry is not None:
        d["geometry"] = list(p.geometry)
    return d


def load_model(path) -> EnvironmentModel:
    """Read a model document; leading '#' comment lines are skipped."""
    lines = Path(path).read_text().splitlines()
    body = "\n".join(ln for ln in lines if not ln.lstrip().startswith("#"))
    try:
        return EnvironmentModel.from_json(body)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not a model document ({exc})") from exc


def save_model(model: EnvironmentModel, path) -> None:
    Path(path).write_text(model.to_json() + "\n")


def reference_model() -> EnvironmentModel:
    """The bundled seven-carbon / six-pair environment (no bath)."""
    return load_model(Path(__file__).with_name("data") / "reference_environment.json")


@dataclass(frozen=True)
class DDSequence:
    """(tau - pi - tau)^N with tau held on the integer-nanosecond grid."""

    n_pulses: int
    tau_ns: int
    phase_scheme: str = "XY8"

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ModelError(f"n_pulses must be a non-negative integer, got {self.n_pulses}")
        if int(self.tau_ns) != self.tau_ns or self.tau_ns < 1:
            raise ModelError(f"tau must be >= 1 ns on the integer grid, got {self.tau_ns}")
        object.__setattr__(self, "n_pulses", int(self.n_pulses))
        object.__setattr__(self, "tau_ns", int(self.tau_ns))

    @classmethod
    def from_seconds(cls, n_pulses: int, tau: float, phase_scheme: str = "XY8") -> "DDSequence":
        return cls(n_pulses, int(round(tau * 1e9)), phase_scheme)

    @property
    def tau(self) -> float:
        return self.tau_ns * 1e-9

    @property
    def total_time(self) -> float:
        return 2 * self.n_pulses * self.tau


@dataclass(frozen=True, eq=False)
class Trace:
    times: np.ndarray
    values: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ModelError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ModelError("times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ModelError("values must be finite")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.times.size


def larmor_frequency(fld: FieldConfig, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Bare 13C precession frequency gamma_c * B_z (Hz)."""
    return constants.gamma_c * fld.b_z


def single_spin_split_frequencies(spin: SingleCarbon, fld: FieldConfig,
                                  constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Nuclear precession frequencies (omega0, omega1) for electron m_s = 0 and m_s = -1."""
    w0 = larmor_frequency(fld, constants)
    return w0, math.hypot(w0 - spin.a_par, spin.a_perp)


def validate_model(model: EnvironmentModel) -> list[str]:
    """Return human-readable invariant violations; an empty list means valid."""
    problems = []
    labels = [c.label for c in model.carbons] + [p.label for p in model.pairs] \
        + [b.label for b in model.bath]
    seen = set()
    for label in labels:
        if label in seen:
            problems.append(f"duplicate label {label!r}")
        seen.add(label)

    for c in (*model.carbons, *model.bath):
        if not (math.isfinite(c.a_par) and math.isfinite(c.a_perp)):
            problems.append(f"{c.label}: non-finite hyperfine")
        if c.a_perp < 0:
            problems.append(f"{c.label}: a_perp must be >= 0")
        if c.t2_star is not None and not c.t2_star > 0:
            problems.append(f"{c.label}: t2_star must be > 0")
        if c.secular_mismatch() > 1.0:
            problems.append(f"{c.label}: tensor secular part disagrees with (a_par, a_perp) "
                            f"by {c.secular_mismatch():.3g} Hz")

    for p in model.pairs:
        if not (math.isfinite(p.x) and math.isfinite(p.z)):
            problems.append(f"{p.label}: non-finite coupling")
        if p.z < 0:
            problems.append(f"{p.label}: z must be >= 0")
        if p.z_par is not None and p.z_perp is not None and abs(p.z_par + p.z_perp - p.z) > 1.0:
            problems.append(f"{p.label}: z_par + z_perp differs from z by "
                            f"{abs(p.z_par + p.z_perp - p.z):.3g} Hz")
        if p.geometry is not None and (len(p.geometry) != 3 or not any(p.geometry)):
            problems.append(f"{p.label}: geometry must be a non-zero integer triple")

    env = model.envelope
    if not 0 < env.amplitude <= 0.5:
        problems.append(f"envelope amplitude {env.amplitude} outside (0, 1/2]")
    if not env.t_coh > 0:
        problems.append("envelope t_coh must be > 0")
    if not env.exponent > 0:
        problems.append("envelope exponent must be > 0")
    return problems

