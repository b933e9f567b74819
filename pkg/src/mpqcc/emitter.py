"""Pulse-train generation for the three users.

Each frame holds a block of quantum slots followed by reference light; the tail of
the reference block carries the pi/2 and 3pi/2 marker pulses used to resolve the
arccos ambiguity of the phase estimator. Within a marker block the k-th marker slot
is modulated by user ``k % 3`` only; the other two users send a plain reference pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import (N_PHASES, PhaseIndex, PulseDescriptor, Role,
                    SystemConfig, Tag, User)

MARKER_OFFSET = {Role.MARKER_HALF_PI: math.pi / 2, Role.MARKER_THREE_HALF_PI: 3 * math.pi / 2}


@dataclass(frozen=True)
class FrameSchedule:
    frame_len: int
    roles: np.ndarray  # uint8 Role per slot
    marker_user: np.ndarray  # int8 user modulating each marker slot, -1 elsewhere

    @property
    def quantum_slots(self) -> np.ndarray:
        return np.flatnonzero(self.roles == Role.QUANTUM)

    @property
    def n_quantum(self) -> int:
        return int(np.count_nonzero(self.roles == Role.QUANTUM))

    def counts(self) -> dict[Role, int]:
        return {r: int(np.count_nonzero(self.roles == r)) for r in Role}

    def user_role(self, user: User, offset: int) -> Role:
        """Role of ``user``'s pulse at in-frame ``offset`` (unmodulating users see plain reference)."""
        role = Role(int(self.roles[offset]))
        if role in MARKER_OFFSET and self.marker_user[offset] != user:
            return Role.REFERENCE
        return role


def build_frame_schedule(cfg: SystemConfig, frame_len: int | None = None) -> FrameSchedule:
    frame_len = cfg.frame_len if frame_len is None else frame_len
    if frame_len < 100:
        raise ValueError(f"frame_len must be >= 100, got {frame_len}")
    n_quantum = math.ceil(cfg.quantum_duty * frame_len - 1e-9)
    n_ref_total = frame_len - n_quantum
    n_markers = int(0.1 * n_ref_total + 1e-9)
    if n_markers < 2:
        raise ValueError(
            f"frame_len={frame_len} with quantum_duty={cfg.quantum_duty} leaves no room "
            "for reference and both marker kinds")
    n_half = math.ceil(n_markers / 2)
    n_three = n_markers - n_half
    roles = np.full(frame_len, Role.REFERENCE, dtype=np.uint8)
    roles[:n_quantum] = Role.QUANTUM
    half_start = frame_len - n_markers
    roles[half_start:half_start + n_half] = Role.MARKER_HALF_PI
    roles[half_start + n_half:] = Role.MARKER_THREE_HALF_PI
    marker_user = np.full(frame_len, -1, dtype=np.int8)
    marker_user[half_start:half_start + n_half] = np.arange(n_half) % 3
    marker_user[half_start + n_half:] = np.arange(n_three) % 3
    return FrameSchedule(frame_len, roles, marker_user)


def sample_pulse(user: User, slot: int, role: Role, cfg: SystemConfig,
                 rng: np.random.Generator) -> PulseDescriptor:
    if role is Role.QUANTUM:
        tag = Tag(int(rng.choice(3, p=[cfg.p_mu, cfg.p_nu, cfg.p_vac])))
        n = int(rng.integers(N_PHASES))
        return PulseDescriptor(user, slot, role, cfg.intensity(tag),
                               2 * math.pi * n / N_PHASES, PhaseIndex(n))
    ref = cfg.intensity(Tag.REFERENCE)
    return PulseDescriptor(user, slot, role, ref, MARKER_OFFSET.get(role, 0.0))


def sample_quantum(cfg: SystemConfig, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized quantum-slot draws: (intensity tags, phase indices), both uint8."""
    u = rng.random(size)
    tags = np.full(size, Tag.VACUUM, dtype=np.uint8)
    tags[u < cfg.p_mu + cfg.p_nu] = Tag.DECOY
    tags[u < cfg.p_mu] = Tag.SIGNAL
    phases = rng.integers(0, N_PHASES, size=size, dtype=np.uint8)
    return tags, phases


def tag_values(cfg: SystemConfig) -> np.ndarray:
    """Mean photon number indexed by Tag."""
    return np.array([cfg.mu, cfg.nu, 0.0, cfg.ref_intensity])


# u64 slot, u8 user, u8 role, u8 intensity tag, u8 phase index
PULSE_DTYPE = np.dtype([("slot", "<u8"), ("user", "u1"), ("role", "u1"),
                        ("tag", "u1"), ("phase", "u1")])


def dump_pulses(path: str | Path, records: np.ndarray) -> None:
    np.asarray(records, dtype=PULSE_DTYPE).tofile(path)


def load_pulses(path: str | Path) -> np.ndarray:
    return np.fromfile(path, dtype=PULSE_DTYPE)


def pulse_records(pulses: list[PulseDescriptor]) -> np.ndarray:
    out = np.zeros(len(pulses), dtype=PULSE_DTYPE)
    for i, p in enumerate(pulses):
        if p.phase_index is not None:
            idx = p.phase_index.n
        else:
            idx = round(p.phase / (2 * math.pi) * N_PHASES) % N_PHASES
        out[i] = (p.slot, p.user, p.role, p.intensity.tag, idx)
    return out
