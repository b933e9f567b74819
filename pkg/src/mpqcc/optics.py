"""Central measurement node: pairwise interference, threshold detection and fiber drift.

Each user's pulse is split 50:50 towards its two ports, so every port sees six optical
paths' worth of phase in total: ``theta[p, 0]`` is the fiber phase of port ``p``'s first
input user and ``theta[p, 1]`` that of its second. Beamsplitter convention:
``(a_u + a_v)/sqrt(2) -> R`` and ``(a_u - a_v)/sqrt(2) -> L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .emitter import MARKER_OFFSET, FrameSchedule, build_frame_schedule, sample_quantum, tag_values
from .types import N_PHASES, PORT_USERS, Port, PulseDescriptor, Role, SystemConfig, User

TWO_PI = 2 * np.pi

# named rng substreams; every (purpose, user-or-port, frame) triple gets its own generator
STREAM_EMIT, STREAM_DRIFT, STREAM_DETECT, STREAM_INIT = 1, 2, 3, 4


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


@dataclass(frozen=True)
class DriftState:
    theta: np.ndarray  # shape (3 ports, 2 inputs), radians in [0, 2pi)
    slot_of_last_update: int = 0

    @classmethod
    def random(cls, rng: np.random.Generator, slot: int = 0) -> "DriftState":
        return cls(rng.uniform(0, TWO_PI, size=(3, 2)), slot)

    @classmethod
    def zero(cls, slot: int = 0) -> "DriftState":
        return cls(np.zeros((3, 2)), slot)

    def path_phase(self, port: Port, user: User) -> float:
        u, v = PORT_USERS[port]
        if user == u:
            return float(self.theta[port, 0])
        if user == v:
            return float(self.theta[port, 1])
        raise ValueError(f"user {user.name} does not feed port {port.name}")

    def pair_difference(self) -> np.ndarray:
        """Per-port phase difference theta_u - theta_v, reduced to [0, 2pi)."""
        return np.mod(self.theta[:, 0] - self.theta[:, 1], TWO_PI)


class Outcome(IntEnum):
    NONE = 0
    ONLY_L = 1
    ONLY_R = 2
    BOTH = 3


@dataclass(frozen=True)
class PortOutcome:
    port: Port
    outcome: Outcome


def advance_drift(state: DriftState, to_slot: int, cfg: SystemConfig,
                  rng: np.random.Generator) -> DriftState:
    if to_slot < state.slot_of_last_update:
        raise ValueError("drift can only move forward in time")
    elapsed = (to_slot - state.slot_of_last_update) / cfg.rep_rate
    if cfg.drift_rate == 0 or elapsed == 0:
        return DriftState(state.theta.copy(), to_slot)
    step = rng.normal(0.0, np.sqrt(cfg.drift_rate * elapsed), size=state.theta.shape)
    return DriftState(np.mod(state.theta + step, TWO_PI), to_slot)


def drift_trajectory(state: DriftState, n_slots: int, cfg: SystemConfig,
                     rng: np.random.Generator) -> tuple[np.ndarray, DriftState]:
    """Unwrapped path phases at each of the next ``n_slots`` slots, shape (n, 3, 2)."""
    if cfg.drift_rate == 0:
        traj = np.broadcast_to(state.theta, (n_slots, 3, 2))
        return traj, DriftState(state.theta.copy(), state.slot_of_last_update + n_slots)
    sigma = np.sqrt(cfg.drift_rate / cfg.rep_rate)
    traj = state.theta + np.cumsum(rng.normal(0.0, sigma, size=(n_slots, 3, 2)), axis=0)
    return traj, DriftState(np.mod(traj[-1], TWO_PI), state.slot_of_last_update + n_slots)


def interference(k_u, k_v, eta_u, eta_v, dpsi, visibility=1.0):
    """(I_R, I_L) mean photon numbers at a port; works elementwise on arrays."""
    a2_u = np.asarray(k_u) * eta_u / 2
    a2_v = np.asarray(k_v) * eta_v / 2
    cross = 2 * visibility * np.sqrt(a2_u * a2_v) * np.cos(dpsi)
    return (a2_u + a2_v + cross) / 2, (a2_u + a2_v - cross) / 2


def port_mean_photons(pulse_u: PulseDescriptor, pulse_v: PulseDescriptor, drift: DriftState,
                      cfg: SystemConfig) -> tuple[float, float]:
    if pulse_u.slot != pulse_v.slot:
        raise ValueError("interfering pulses must share a slot")
    port = _port_of(pulse_u.user, pulse_v.user)
    psi_u = pulse_u.phase + drift.path_phase(port, pulse_u.user)
    psi_v = pulse_v.phase + drift.path_phase(port, pulse_v.user)
    eta = cfg.per_arm_transmittance
    i_r, i_l = interference(pulse_u.intensity.value, pulse_v.intensity.value, eta, eta,
                            psi_u - psi_v, cfg.visibility)
    return float(i_r), float(i_l)


def _port_of(u: User, v: User) -> Port:
    for port, pair in PORT_USERS.items():
        if pair == (u, v):
            return port
    raise ValueError(f"no port interferes ({u.name}, {v.name}) in that order")


def click_probability(intensity, cfg: SystemConfig):
    return 1.0 - (1.0 - cfg.dark_count_prob) * np.exp(-cfg.detector_efficiency * np.asarray(intensity))


def detect(intensity: float, cfg: SystemConfig, rng: np.random.Generator) -> bool:
    if intensity < 0:
        raise ValueError("mean photon number must be non-negative")
    return bool(rng.random() < click_probability(intensity, cfg))


def classify(fired_r, fired_l):
    return np.asarray(fired_l, dtype=np.uint8) + 2 * np.asarray(fired_r, dtype=np.uint8)


def simulate_slot(pulses: dict[User, PulseDescriptor], drift: DriftState, cfg: SystemConfig,
                  rng: np.random.Generator) -> list[PortOutcome]:
    slots = {p.slot for p in pulses.values()}
    if len(slots) != 1:
        raise ValueError("all three pulses must share the same slot")
    out = []
    for port, (u, v) in PORT_USERS.items():
        i_r, i_l = port_mean_photons(pulses[u], pulses[v], drift, cfg)
        fired_r, fired_l = detect(i_r, cfg, rng), detect(i_l, cfg, rng)
        out.append(PortOutcome(port, Outcome(int(classify(fired_r, fired_l)))))
    return out


@dataclass
class OpticsRun:
    """Raw output of the measurement node over a run of frames."""
    cfg: SystemConfig
    schedule: FrameSchedule
    n_frames: int
    click_slots: list[np.ndarray]  # per port, int64 global slots (single-click quantum slots)
    click_sides: list[np.ndarray]  # per port, uint8 Side
    ref_counts: np.ndarray  # (n_frames, 3 ports, 6): nR, nL, nR_half, nL_half, nR_three, nL_three
    tags: np.ndarray  # (3 users, n_frames * n_quantum) uint8
    phases: np.ndarray  # (3 users, n_frames * n_quantum) uint8
    true_difference: np.ndarray  # (n_frames, 3) frame-mean of theta_u - theta_v per port (unwrapped)

    @property
    def n_quantum_slots(self) -> int:
        return self.n_frames * self.schedule.n_quantum

    def quantum_index(self, slots) -> np.ndarray:
        slots = np.asarray(slots, dtype=np.int64)
        frame, off = np.divmod(slots, self.schedule.frame_len)
        if np.any(off >= self.schedule.n_quantum):
            raise KeyError("slot is not a quantum slot")
        return frame * self.schedule.n_quantum + off


def _static_frame_pulses(schedule: FrameSchedule, cfg: SystemConfig):
    """Per-user intensity and phase for the non-quantum part of a frame."""
    f = schedule.frame_len
    k = np.full((3, f), cfg.ref_intensity)
    phi = np.zeros((3, f))
    for role, offset in MARKER_OFFSET.items():
        for user in User:
            sel = (schedule.roles == role) & (schedule.marker_user == user)
            phi[user, sel] = offset
    return k, phi


def run_optics(cfg: SystemConfig, n_frames: int, seed: int, *, initial: DriftState | None = None,
               schedule: FrameSchedule | None = None) -> OpticsRun:
    """Simulate ``n_frames`` frames; output depends only on (cfg, n_frames, seed, initial)."""
    schedule = schedule or build_frame_schedule(cfg)
    f, nq = schedule.frame_len, schedule.n_quantum
    k_static, phi_static = _static_frame_pulses(schedule, cfg)
    values = tag_values(cfg)
    eta = cfg.per_arm_transmittance
    roles = schedule.roles

    # per port, which in-frame offsets are half/three markers modulated by u, by v, or by neither
    masks = []
    for port, (u, v) in PORT_USERS.items():
        m = {}
        for name, role in (("half", Role.MARKER_HALF_PI), ("three", Role.MARKER_THREE_HALF_PI)):
            is_role = roles == role
            m[name + "_u"] = is_role & (schedule.marker_user == u)
            m[name + "_v"] = is_role & (schedule.marker_user == v)
        m["plain"] = (roles == Role.REFERENCE) | (((roles == Role.MARKER_HALF_PI) | (roles == Role.MARKER_THREE_HALF_PI))
                                                   & (schedule.marker_user != u) & (schedule.marker_user != v))
        masks.append(m)

    state = initial if initial is not None else DriftState.random(substream(seed, STREAM_INIT))
    tags = np.empty((3, n_frames * nq), dtype=np.uint8)
    phases = np.empty((3, n_frames * nq), dtype=np.uint8)
    ref_counts = np.zeros((n_frames, 3, 6), dtype=np.int64)
    true_diff = np.empty((n_frames, 3))
    slots_out = [[] for _ in range(3)]
    sides_out = [[] for _ in range(3)]
    users = np.array([[u, v] for u, v in PORT_USERS.values()])

    for frame in range(n_frames):
        k = k_static.copy()
        phi = phi_static.copy()
        for user in User:
            t, n = sample_quantum(cfg, substream(seed, STREAM_EMIT, user, frame), nq)
            tags[user, frame * nq:(frame + 1) * nq] = t
            phases[user, frame * nq:(frame + 1) * nq] = n
            k[user, :nq] = values[t]
            phi[user, :nq] = n * (2 * np.pi / N_PHASES)
        traj, state = drift_trajectory(state, f, cfg, substream(seed, STREAM_DRIFT, frame))
        diff = traj[:, :, 0] - traj[:, :, 1]  # (f, 3)
        true_diff[frame] = diff.mean(axis=0)
        dpsi = phi[users[:, 0]].T - phi[users[:, 1]].T + diff  # (f, 3)
        i_r, i_l = interference(k[users[:, 0]].T, k[users[:, 1]].T, eta, eta, dpsi, cfg.visibility)
        u_rand = substream(seed, STREAM_DETECT, frame).random((2, f, 3))
        fired_r = u_rand[0] < click_probability(i_r, cfg)
        fired_l = u_rand[1] < click_probability(i_l, cfg)
        base = frame * f
        for port in range(3):
            r, l = fired_r[:, port], fired_l[:, port]
            single = np.flatnonzero(r[:nq] ^ l[:nq])
            slots_out[port].append(base + single)
            sides_out[port].append(l[single].astype(np.uint8))
            m = masks[port]
            plain = m["plain"]
            counts = ref_counts[frame, port]
            counts[0] = np.count_nonzero(r & plain)
            counts[1] = np.count_nonzero(l & plain)
            # v-modulated markers see the opposite offset sign: swap R/L to fold them in
            counts[2] = np.count_nonzero(r & m["half_u"]) + np.count_nonzero(l & m["half_v"])
            counts[3] = np.count_nonzero(l & m["half_u"]) + np.count_nonzero(r & m["half_v"])
            counts[4] = np.count_nonzero(r & m["three_u"]) + np.count_nonzero(l & m["three_v"])
            counts[5] = np.count_nonzero(l & m["three_u"]) + np.count_nonzero(r & m["three_v"])

    click_slots = [np.concatenate(s).astype(np.int64) if s else np.zeros(0, np.int64) for s in slots_out]
    click_sides = [np.concatenate(s) if s else np.zeros(0, np.uint8) for s in sides_out]
    return OpticsRun(cfg, schedule, n_frames, click_slots, click_sides, ref_counts, tags, phases, true_diff)


# u64 slot, u8 port, u8 side
CLICK_DTYPE = np.dtype([("slot", "<u8"), ("port", "u1"), ("side", "u1")])


def click_records(slots: list[np.ndarray], sides: list[np.ndarray]) -> np.ndarray:
    parts = []
    for port in range(3):
        rec = np.zeros(len(slots[port]), dtype=CLICK_DTYPE)
        rec["slot"], rec["port"], rec["side"] = slots[port], port, sides[port]
        parts.append(rec)
    out = np.concatenate(parts)
    return out[np.lexsort((out["port"], out["slot"]))]


def dump_clicks(path: str | Path, records: np.ndarray) -> None:
    np.asarray(records, dtype=CLICK_DTYPE).tofile(path)


def load_clicks(path: str | Path) -> np.ndarray:
    return np.fromfile(path, dtype=CLICK_DTYPE)
