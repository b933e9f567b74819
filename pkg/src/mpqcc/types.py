"""Shared data model: intensity classes, pulses, ports, clicks and the system configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import IntEnum
from pathlib import Path

N_PHASES = 16

# per-user effective class of an ordered two-slot intensity pattern:
# {mu,0}, {nu,0}, {0,0}, {nu,nu}; anything else is unused by the estimators
CLASS_MU, CLASS_NU, CLASS_VAC, CLASS_NUNU, CLASS_OTHER = "mu", "nu", "vac", "nunu", "other"


class Tag(IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2
    REFERENCE = 3


class Role(IntEnum):
    QUANTUM = 0
    REFERENCE = 1
    MARKER_HALF_PI = 2
    MARKER_THREE_HALF_PI = 3


class User(IntEnum):
    A = 0
    B = 1
    C = 2


class Port(IntEnum):
    P1_AB = 0
    P2_BC = 1
    P3_CA = 2

    @property
    def users(self) -> tuple[User, User]:
        """(u, v) input users; u enters the beamsplitter's '+' arm."""
        return PORT_USERS[self]


class Side(IntEnum):
    R = 0
    L = 1


PORT_USERS = {
    Port.P1_AB: (User.A, User.B),
    Port.P2_BC: (User.B, User.C),
    Port.P3_CA: (User.C, User.A),
}

# each user's two ports in canonical (first, second) order
USER_PORTS = {
    User.A: (Port.P1_AB, Port.P3_CA),
    User.B: (Port.P1_AB, Port.P2_BC),
    User.C: (Port.P2_BC, Port.P3_CA),
}


@dataclass(frozen=True)
class IntensityClass:
    tag: Tag
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"negative mean photon number {self.value}")
        if self.tag is Tag.VACUUM and self.value != 0:
            raise ValueError("vacuum intensity must be exactly 0")


@dataclass(frozen=True)
class PhaseIndex:
    n: int

    def __post_init__(self):
        if not 0 <= self.n < N_PHASES:
            raise ValueError(f"phase index {self.n} outside [0, {N_PHASES})")

    @property
    def radians(self) -> float:
        return 2 * math.pi * self.n / N_PHASES


@dataclass(frozen=True)
class PulseDescriptor:
    user: User
    slot: int
    role: Role
    intensity: IntensityClass
    phase: float  # radians; 2*pi*n/16 for quantum pulses, 0 / pi/2 / 3pi/2 otherwise
    phase_index: PhaseIndex | None = None

    def __post_init__(self):
        is_ref = self.intensity.tag is Tag.REFERENCE
        if (self.role is Role.QUANTUM) == is_ref:
            raise ValueError(f"role {self.role.name} incompatible with intensity {self.intensity.tag.name}")


@dataclass(frozen=True)
class ClickRecord:
    port: Port
    slot: int
    side: Side


class ConfigError(ValueError):
    """Raised with the full list of violated configuration invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class SystemConfig:
    rep_rate: float = 5.0e8
    quantum_duty: float = 143.52 / 500
    per_arm_transmittance: float = 6.18e-3
    detector_efficiency: float = 0.81
    dark_count_prob: float = 1.0e-8
    p_mu: float = 0.15
    p_nu: float = 0.35
    mu: float = 0.3535
    nu: float = 0.0413
    f_ec: float = 1.06
    epsilon: float = 1.0e-10
    window_slots: int = 50_000
    drift_rate: float = 1.0e3
    visibility: float = 1.0
    reference_intensity: float = 0.0  # 0 means "use mu"
    frame_len: int = 10_000
    decoy_cutoff: int = 4

    @property
    def p_vac(self) -> float:
        return 1.0 - self.p_mu - self.p_nu

    @property
    def ref_intensity(self) -> float:
        return self.reference_intensity if self.reference_intensity > 0 else self.mu

    @property
    def quantum_rate(self) -> float:
        """Quantum-light pulses per second."""
        return self.quantum_duty * self.rep_rate

    def with_total_loss(self, total_loss_db: float) -> "SystemConfig":
        return replace(self, per_arm_transmittance=transmittance_from_total_loss(total_loss_db))

    def intensity(self, tag: Tag) -> IntensityClass:
        value = {Tag.SIGNAL: self.mu, Tag.DECOY: self.nu, Tag.VACUUM: 0.0,
                 Tag.REFERENCE: self.ref_intensity}[tag]
        return IntensityClass(tag, value)


def transmittance_from_total_loss(total_loss_db: float) -> float:
    """Per-arm transmittance for symmetric arms sharing the total loss equally."""
    return 10.0 ** (-total_loss_db / 30.0)


def total_loss_from_transmittance(eta: float) -> float:
    return -30.0 * math.log10(eta)


def validate_config(cfg: SystemConfig) -> SystemConfig:
    bad = []

    def check(ok, msg):
        if not ok:
            bad.append(msg)

    check(cfg.rep_rate > 0, f"rep_rate > 0 violated (rep_rate={cfg.rep_rate})")
    check(0 < cfg.quantum_duty <= 1, f"quantum_duty in (0,1] violated (quantum_duty={cfg.quantum_duty})")
    check(0 < cfg.per_arm_transmittance <= 1,
          f"per_arm_transmittance in (0,1] violated (per_arm_transmittance={cfg.per_arm_transmittance})")
    for name in ("detector_efficiency", "dark_count_prob", "p_mu", "p_nu", "visibility"):
        v = getattr(cfg, name)
        check(0 <= v <= 1, f"{name} in [0,1] violated ({name}={v})")
    check(cfg.p_mu + cfg.p_nu <= 1, f"p_mu+p_nu <= 1 violated (p_mu={cfg.p_mu}, p_nu={cfg.p_nu})")
    check(0 < cfg.nu, f"nu > 0 violated (nu={cfg.nu})")
    check(cfg.nu < cfg.mu, f"nu < mu violated (mu={cfg.mu}, nu={cfg.nu})")
    check(cfg.mu < 1, f"mu < 1 violated (mu={cfg.mu})")
    check(cfg.f_ec >= 1, f"f_ec >= 1 violated (f_ec={cfg.f_ec})")
    check(0 < cfg.epsilon < 1, f"epsilon in (0,1) violated (epsilon={cfg.epsilon})")
    check(cfg.window_slots >= 0, f"window_slots >= 0 violated (window_slots={cfg.window_slots})")
    check(cfg.drift_rate >= 0, f"drift_rate >= 0 violated (drift_rate={cfg.drift_rate})")
    check(cfg.reference_intensity >= 0,
          f"reference_intensity >= 0 violated (reference_intensity={cfg.reference_intensity})")
    check(cfg.frame_len >= 100, f"frame_len >= 100 violated (frame_len={cfg.frame_len})")
    check(cfg.decoy_cutoff >= 2, f"decoy_cutoff >= 2 violated (decoy_cutoff={cfg.decoy_cutoff})")
    if bad:
        raise ConfigError(bad)
    return cfg


_FIELD_TYPES = {f.name: f.type for f in fields(SystemConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    if kind in ("int", int):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    return float(raw)


def parse_config(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) over ``base`` defaults."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"line {lineno}: expected 'key = value', got {line!r}"])
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError([f"line {lineno}: unknown key {key!r}"])
        try:
            values[key] = _coerce(key, raw)
        except ValueError:
            raise ConfigError([f"line {lineno}: bad value {raw!r} for {key}"]) from None
    return replace(base or SystemConfig(), **values)


def format_config(cfg: SystemConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)!r}\n" for f in fields(SystemConfig))


def load_config(path: str | Path, base: SystemConfig | None = None) -> SystemConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def apply_overrides(cfg: SystemConfig, overrides: dict[str, str]) -> SystemConfig:
    unknown = [k for k in overrides if k not in _FIELD_TYPES]
    if unknown:
        raise ConfigError([f"unknown key {k!r}" for k in unknown])
    return replace(cfg, **{k: _coerce(k, v) for k, v in overrides.items()})


# Operating points of the two reported runs: total loss dB -> (mu, nu, reported per-pulse rate)
OPERATING_POINTS = {
    51.8: dict(mu=0.2572, nu=0.0209, key_rate=1.64e-7),
    66.3: dict(mu=0.3535, nu=0.0413, key_rate=3.75e-8),
}


def operating_point(total_loss_db: float, **overrides) -> SystemConfig:
    row = OPERATING_POINTS[total_loss_db]
    cfg = SystemConfig(mu=row["mu"], nu=row["nu"], p_mu=0.15, p_nu=0.35, f_ec=1.06,
                       detector_efficiency=0.81)
    return replace(cfg.with_total_loss(total_loss_db), **overrides)
