"""Three-party phase compensation from time-multiplexed reference light."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TWO_PI = 2 * math.pi
SLICE_TOLERANCE = math.pi / 16


@dataclass(frozen=True)
class ReferenceCounts:
    n_R: int
    n_L: int
    n_R_half: int = 0
    n_L_half: int = 0
    n_R_three: int = 0
    n_L_three: int = 0

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ValueError("counts must be non-negative")

    def as_tuple(self) -> tuple[int, ...]:
        return (self.n_R, self.n_L, self.n_R_half, self.n_L_half, self.n_R_three, self.n_L_three)

    @classmethod
    def expected(cls, theta: float, total: float, visibility: float = 1.0) -> "ReferenceCounts":
        """Noise-free counts (real-valued) for a port whose phase difference is ``theta``."""
        def split(x):
            return total * (1 + visibility * math.cos(x)) / 2, total * (1 - visibility * math.cos(x)) / 2
        return cls(*split(theta), *split(theta + math.pi / 2), *split(theta + 3 * math.pi / 2))


def _ratio(a, b):
    return (a - b) / (a + b)


def estimate_pair_phase(counts: ReferenceCounts) -> float | None:
    """Phase difference in [0, 2pi), or None when either estimator has no counts."""
    theta, _ = _estimate(np.array([counts.as_tuple()], dtype=float))
    return None if np.isnan(theta[0]) else float(theta[0])


def _estimate(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized estimator over rows of six counts; returns (theta_hat, disagreement flag)."""
    c = np.asarray(c, dtype=float)
    n_r, n_l, r_h, l_h, r_t, l_t = np.moveaxis(c, -1, 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta0 = np.arccos(np.clip(_ratio(n_r, n_l), -1.0, 1.0))
        sin_half = -_ratio(r_h, l_h)  # cos(theta + pi/2) = -sin(theta)
        sin_three = _ratio(r_t, l_t)  # cos(theta + 3pi/2) = sin(theta)
    theta = np.where(sin_half >= 0, theta0, np.mod(TWO_PI - theta0, TWO_PI))
    theta = np.where((n_r + n_l > 0) & (r_h + l_h > 0), theta, np.nan)
    flag = (r_t + l_t > 0) & (r_h + l_h > 0) & (np.sign(sin_half) * np.sign(sin_three) < 0)
    return theta, flag


def estimate_phases(ref_counts: np.ndarray, carry_forward: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval, per-port estimates from an (intervals, 3, 6) count array.

    Intervals without usable counts inherit the previous estimate; leading gaps stay NaN.
    """
    theta, flag = _estimate(ref_counts)
    if carry_forward:
        for p in range(theta.shape[1]):
            col = theta[:, p]
            valid = ~np.isnan(col)
            idx = np.where(valid, np.arange(len(col)), -1)
            np.maximum.accumulate(idx, out=idx)
            theta[:, p] = np.where(idx >= 0, col[np.maximum(idx, 0)], np.nan)
    return theta, flag


@dataclass(frozen=True)
class SignConvention:
    """One flip per pairwise difference: theta_B-theta_A, theta_C-theta_B, theta_A-theta_C."""
    flips: tuple[bool, bool, bool] = (False, False, False)

    @property
    def signs(self) -> np.ndarray:
        return np.where(np.array(self.flips), -1.0, 1.0)

    @staticmethod
    def all() -> list["SignConvention"]:
        return [SignConvention(tuple(f)) for f in itertools.product((False, True), repeat=3)]

    def label(self) -> str:
        return "".join("-" if f else "+" for f in self.flips)


def compensate(encoded_total, theta_hat, convention: SignConvention = SignConvention(),
               enabled: bool = True) -> np.ndarray:
    """Total GHZ phase per event; NaN where an estimate is missing.

    ``encoded_total`` is delta_A - delta_B - delta_C; ``theta_hat`` holds, per event, the
    estimate for each port at the interval of that port's click.
    """
    encoded_total = np.asarray(encoded_total, dtype=float)
    if not enabled:
        return np.mod(encoded_total, TWO_PI)
    correction = np.asarray(theta_hat, dtype=float) @ convention.signs
    return np.mod(encoded_total + correction, TWO_PI)


def slice_selection(theta_total, tolerance: float = SLICE_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """(kept, expected parity): kept iff the total phase lies within ``tolerance`` of 0 or pi."""
    theta_total = np.asarray(theta_total, dtype=float)
    r = np.mod(theta_total, math.pi)
    with np.errstate(invalid="ignore"):
        kept = np.minimum(r, math.pi - r) <= tolerance + 1e-12
    expected = np.mod(np.rint(np.nan_to_num(theta_total) / math.pi), 2).astype(np.uint8)
    return kept & ~np.isnan(theta_total), expected


def x_error(theta_total, parity, tolerance: float = SLICE_TOLERANCE) -> tuple[int, int]:
    """(errors, kept) for X events under the slice rule; even parity expected at 0, odd at pi."""
    kept, expected = slice_selection(theta_total, tolerance)
    errors = np.count_nonzero(kept & (np.asarray(parity) != expected))
    return int(errors), int(np.count_nonzero(kept))


class CalibrationError(ValueError):
    pass


def convention_table(encoded_total, theta_hat, parity) -> dict[SignConvention, tuple[int, int]]:
    return {conv: x_error(compensate(encoded_total, theta_hat, conv), parity)
            for conv in SignConvention.all()}


def calibrate_sign_convention(encoded_total, theta_hat, parity, min_events: int = 1000
                              ) -> tuple[SignConvention, dict[SignConvention, tuple[int, int]]]:
    if len(encoded_total) < min_events:
        raise CalibrationError(f"need >= {min_events} X-basis events, got {len(encoded_total)}")
    table = convention_table(encoded_total, theta_hat, parity)

    def rate(conv):
        e, k = table[conv]
        return e / k if k else math.inf
    # min() keeps the first of equal keys, and all() lists vertices in lexicographic order
    return min(SignConvention.all(), key=rate), table


def write_phase_log(path: str | Path, ref_counts: np.ndarray, theta_hat: np.ndarray,
                    flags: np.ndarray, trailer: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "port", "theta_hat", "n_R", "n_L", "flag"])
        for i in range(ref_counts.shape[0]):
            for p in range(ref_counts.shape[1]):
                th = theta_hat[i, p]
                w.writerow([i, p + 1, "" if np.isnan(th) else f"{th:.6f}",
                            int(ref_counts[i, p, 0]), int(ref_counts[i, p, 1]), int(flags[i, p])])
        if trailer:
            fh.write(f"# {trailer}\n")
