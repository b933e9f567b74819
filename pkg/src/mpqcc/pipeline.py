"""End-to-end Monte Carlo: emit, detect, pair, compensate, tally, bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optics import DriftState, OpticsRun, run_optics
from .pairing import BASIS_X, SiftedBatch, pair_indices, sift, tally
from .phase import SignConvention, calibrate_sign_convention, compensate, convention_table, estimate_phases
from .security import (DecoyBounds, SecurityAccounting, decoy_lp_bounds, key_length, location_triples,
                       rate_conversion)
from .types import SystemConfig


def inject_sign_flips(ref_counts: np.ndarray, flips) -> np.ndarray:
    """Swap the pi/2 and 3pi/2 marker columns of flipped ports.

    This mirrors a wrongly wired modulator sign: the estimator then returns 2pi - theta
    for that port, which the sign calibration has to undo.
    """
    out = np.array(ref_counts, copy=True)
    for p, flip in enumerate(flips):
        if flip:
            out[:, p, 2:4], out[:, p, 4:6] = ref_counts[:, p, 4:6], ref_counts[:, p, 2:4]
    return out


@dataclass
class SimulationResult:
    cfg: SystemConfig
    run: OpticsRun
    batch: SiftedBatch
    theta_hat: np.ndarray  # (frames, 3) per-port estimates
    flags: np.ndarray
    event_theta: np.ndarray  # (n, 3) estimate each event uses per port
    convention: SignConvention
    theta_total: np.ndarray

    @property
    def n_quantum(self) -> int:
        return self.run.n_quantum_slots

    def click_fractions(self) -> list[float]:
        return [len(s) / self.n_quantum for s in self.run.click_slots]

    def accounting(self) -> SecurityAccounting:
        n_trials = location_triples(len(self.batch), self.click_fractions()) if len(self.batch) else 1.0
        return tally(self.batch, self.theta_total, self.n_quantum, self.cfg, n_trials)

    def x_mask(self) -> np.ndarray:
        return self.batch.basis == BASIS_X

    def sign_table(self) -> dict:
        x = self.x_mask()
        return convention_table(self.batch.encoded_total[x], self.event_theta[x], self.batch.parity[x])


def event_estimates(theta_hat: np.ndarray, slots: np.ndarray, frame_len: int) -> np.ndarray:
    """Per event and port, the estimate of the frame in which that port clicked."""
    frames = np.asarray(slots) // frame_len
    return np.stack([theta_hat[frames[:, p], p] for p in range(3)], axis=1) if len(frames) else np.zeros((0, 3))


def simulate(cfg: SystemConfig, n_frames: int, seed: int, *, flips=(False, False, False),
             convention: SignConvention | None = SignConvention(), compensation: bool = True,
             min_calibration_events: int = 1000, initial: DriftState | None = None) -> SimulationResult:
    """Run the whole chain. ``convention=None`` calibrates the sign convention from X events."""
    run = run_optics(cfg, n_frames, seed, initial=initial)
    return process(cfg, run, flips=flips, convention=convention, compensation=compensation,
                   min_calibration_events=min_calibration_events)


def process(cfg: SystemConfig, run: OpticsRun, *, flips=(False, False, False),
            convention: SignConvention | None = SignConvention(), compensation: bool = True,
            min_calibration_events: int = 1000) -> SimulationResult:
    """Everything after detection: phase estimates, pairing, sifting, compensation."""
    ref = inject_sign_flips(run.ref_counts, flips)
    theta_hat, flags = estimate_phases(ref)
    idx = pair_indices(*run.click_slots, cfg.window_slots)
    slots = np.stack([run.click_slots[p][idx[:, p]] for p in range(3)], axis=1)
    sides = np.stack([run.click_sides[p][idx[:, p]] for p in range(3)], axis=1)

    def lookup(user, s):
        q = run.quantum_index(s)
        return run.tags[user, q], run.phases[user, q]

    batch = sift(slots, sides, lookup)
    ev = event_estimates(theta_hat, slots, run.schedule.frame_len)
    if convention is None:
        x = batch.basis == BASIS_X
        convention, _ = calibrate_sign_convention(batch.encoded_total[x], ev[x], batch.parity[x],
                                                  min_calibration_events)
    theta_total = compensate(batch.encoded_total, ev, convention, compensation)
    return SimulationResult(cfg, run, batch, theta_hat, flags, ev, convention, theta_total)


@dataclass(frozen=True)
class KeySummary:
    accounting: SecurityAccounting
    bounds: DecoyBounds
    key_length: float
    rate_per_pulse: float
    rate_bits_per_s: float


def analyze(acc: SecurityAccounting, cfg: SystemConfig) -> KeySummary:
    bounds = decoy_lp_bounds(acc, cfg)
    l = key_length(acc, bounds, cfg)
    per_pulse, per_s = rate_conversion(l, acc.n_quantum, cfg)
    return KeySummary(acc, bounds, l, per_pulse, per_s)
