"""Port-indexed sliding-window pairing and sifting of the resulting triples.

Bit convention: a user's Z bit is 0 when its non-vacuum pulse sits in the user's
first port (A: P1, B: P1, C: P2). A photon-per-user GHZ event lights each port
from exactly one user, which forces bitB = bitC = 1 - bitA; Bob and Charlie
therefore invert their raw bits when forming the key.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .phase import SLICE_TOLERANCE, slice_selection
from .security import X_CLASSES, Z_CLASSES, Z_SIGNAL, SecurityAccounting, combo_prior
from .types import (CLASS_MU, CLASS_NU, CLASS_NUNU, CLASS_OTHER, CLASS_VAC, N_PHASES, USER_PORTS,
                    ClickRecord, Port, SystemConfig, Tag, User)

TWO_PI = 2 * np.pi

BASIS_Z, BASIS_X, BASIS_DISCARD = "Z", "X", "D"


def _pattern_class(first: int, second: int) -> str:
    pair = {first, second}
    if pair == {Tag.SIGNAL, Tag.VACUUM}:
        return CLASS_MU
    if pair == {Tag.DECOY, Tag.VACUUM}:
        return CLASS_NU
    if first == second == Tag.VACUUM:
        return CLASS_VAC
    if first == second == Tag.DECOY:
        return CLASS_NUNU
    return CLASS_OTHER


# lookup table over (first tag, second tag) for vectorized classification
_CLASS_TABLE = np.array([[_pattern_class(a, b) for b in range(3)] for a in range(3)], dtype=object)


@dataclass(frozen=True)
class TripleEvent:
    c1: ClickRecord
    c2: ClickRecord
    c3: ClickRecord

    @property
    def span(self) -> int:
        s = (self.c1.slot, self.c2.slot, self.c3.slot)
        return max(s) - min(s)


def pair_indices(s1, s2, s3, window_slots: int) -> np.ndarray:
    """Greedy earliest-first pairing in port order; returns (n, 3) indices into the streams.

    For each P1 click in order: take the earliest unconsumed P2 click within the window
    of it, then the earliest unconsumed P3 click keeping the span within the window. A P1
    click with no completion is dropped. Both searches only move forward: any click skipped
    over is already out of reach of every later P1 click.
    """
    s1, s2, s3 = (np.asarray(s, dtype=np.int64) for s in (s1, s2, s3))
    for name, s in (("P1", s1), ("P2", s2), ("P3", s3)):
        if s.size > 1 and np.any(np.diff(s) <= 0):
            raise ValueError(f"{name} click stream is not strictly increasing")
    w = int(window_slots)
    out = []
    j = k = 0
    n2, n3 = len(s2), len(s3)
    l2, l3 = s2.tolist(), s3.tolist()
    for i, t1 in enumerate(s1.tolist()):
        while j < n2 and l2[j] < t1 - w:
            j += 1
        if j == n2:
            break
        t2 = l2[j]
        if t2 > t1 + w:
            continue
        lo, hi = min(t1, t2), max(t1, t2)
        while k < n3 and l3[k] < hi - w:
            k += 1
        if k == n3:
            break
        if l3[k] > lo + w:
            continue
        out.append((i, j, k))
        j += 1
        k += 1
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def pair_clicks(streams: list[list[ClickRecord]], window_slots: int) -> list[TripleEvent]:
    if len(streams) != 3:
        raise ValueError("need one click stream per port")
    for port, stream in zip(Port, streams):
        if any(c.port != port for c in stream):
            raise ValueError(f"stream {port.name} contains clicks from another port")
    idx = pair_indices(*([c.slot for c in s] for s in streams), window_slots)
    return [TripleEvent(streams[0][a], streams[1][b], streams[2][c]) for a, b, c in idx]


def coincidence_count(s1, s2, s3) -> int:
    """Slots where all three ports registered a retained click."""
    return len(np.intersect1d(np.intersect1d(s1, s2, assume_unique=True), s3, assume_unique=True))


@dataclass
class SiftedBatch:
    """Column-oriented sifted triples.

    ``tags`` and ``phase_idx`` have shape (n, 3 users, 2 slots) in canonical slot order.
    """
    slots: np.ndarray  # (n, 3) click slots at P1, P2, P3
    sides: np.ndarray  # (n, 3) Side per port
    tags: np.ndarray
    phase_idx: np.ndarray

    def __len__(self):
        return len(self.slots)

    @property
    def classes(self) -> np.ndarray:
        return _CLASS_TABLE[self.tags[:, :, 0], self.tags[:, :, 1]]

    @property
    def basis(self) -> np.ndarray:
        cls = self.classes
        z = np.all((cls == CLASS_MU) | (cls == CLASS_NU), axis=1)
        x = np.all(cls == CLASS_NUNU, axis=1)
        return np.where(z, BASIS_Z, np.where(x, BASIS_X, BASIS_DISCARD))

    @property
    def bits(self) -> np.ndarray:
        """Raw Z bits (n, 3); meaningful only where the user's pattern is {k, vacuum}."""
        return (self.tags[:, :, 0] == Tag.VACUUM).astype(np.uint8)

    @property
    def delta(self) -> np.ndarray:
        """Per-user relative encoded phase, first slot minus second, in [0, 2pi)."""
        d = self.phase_idx[:, :, 0].astype(np.int64) - self.phase_idx[:, :, 1]
        return np.mod(d, N_PHASES) * (TWO_PI / N_PHASES)

    @property
    def encoded_total(self) -> np.ndarray:
        """delta_A - delta_B - delta_C: the encoded part of the GHZ total phase."""
        d = self.delta
        return np.mod(d[:, 0] - d[:, 1] - d[:, 2], TWO_PI)

    @property
    def parity(self) -> np.ndarray:
        """Number of L-side clicks mod 2 (0 -> even -> Phi+)."""
        return (self.sides.sum(axis=1) % 2).astype(np.uint8)

    @property
    def shared_slot(self) -> np.ndarray:
        """A user's two slots coincide (same slot seen at both of its ports)."""
        s = self.slots
        return (s[:, 0] == s[:, 2]) | (s[:, 0] == s[:, 1]) | (s[:, 1] == s[:, 2])

    def combo_labels(self) -> np.ndarray:
        letters = np.array(["S", "D", "V"])
        pat = np.char.add(letters[self.tags[:, :, 0]], letters[self.tags[:, :, 1]])
        return np.char.add(np.char.add(np.char.add(pat[:, 0], "-"), np.char.add(pat[:, 1], "-")), pat[:, 2])


def user_slots(slots: np.ndarray) -> np.ndarray:
    """(n, 3 users, 2) global slots of each user's two pulses in canonical order."""
    slots = np.asarray(slots)
    cols = np.array([[p.value for p in USER_PORTS[u]] for u in User])
    return slots[:, cols]


def sift(slots: np.ndarray, sides: np.ndarray, lookup) -> SiftedBatch:
    """Attach sent pulses to triples; ``lookup(user, slots) -> (tags, phase indices)``."""
    us = user_slots(slots)
    tags = np.empty(us.shape, dtype=np.uint8)
    phase_idx = np.empty(us.shape, dtype=np.uint8)
    for u in User:
        t, n = lookup(u, us[:, u, :].ravel())
        tags[:, u, :] = np.asarray(t).reshape(-1, 2)
        phase_idx[:, u, :] = np.asarray(n).reshape(-1, 2)
    return SiftedBatch(np.asarray(slots, dtype=np.int64), np.asarray(sides, dtype=np.uint8), tags, phase_idx)


@dataclass(frozen=True)
class SiftedEvent:
    basis: str
    patterns: tuple[tuple[Tag, Tag], ...]
    bits: tuple[int, int, int] | None
    delta: tuple[float, float, float] | None
    parity: int


def classify_event(triple: TripleEvent, sent) -> SiftedEvent:
    """Sift one triple. ``sent`` maps (user, slot) to a PulseDescriptor."""
    clicks = (triple.c1, triple.c2, triple.c3)
    pulses = []
    for u in User:
        pair = []
        for port in USER_PORTS[u]:
            key = (u, clicks[port].slot)
            if key not in sent:
                raise KeyError(f"no pulse recorded for user {u.name} at slot {key[1]}")
            pair.append(sent[key])
        pulses.append(pair)
    tags = np.array([[[p.intensity.tag for p in pair] for pair in pulses]], dtype=np.uint8)
    idx = np.array([[[p.phase_index.n if p.phase_index else 0 for p in pair] for pair in pulses]],
                   dtype=np.uint8)
    batch = SiftedBatch(np.array([[c.slot for c in clicks]]), np.array([[c.side for c in clicks]]),
                        tags, idx)
    basis = str(batch.basis[0])
    patterns = tuple((Tag(int(a)), Tag(int(b))) for a, b in tags[0])
    bits = tuple(int(b) for b in batch.bits[0]) if basis == BASIS_Z else None
    delta = tuple(float(d) for d in batch.delta[0]) if basis == BASIS_X else None
    return SiftedEvent(basis, patterns, bits, delta, int(batch.parity[0]))


def tally(batch: SiftedBatch, theta_total, n_quantum: float, cfg: SystemConfig,
          n_trials: float | None = None, tolerance: float = SLICE_TOLERANCE) -> SecurityAccounting:
    """Decoy gains for every Z- and X-type class combination, plus error counts.

    ``n_trials`` is the number of candidate location triples (see ``location_triples``);
    by default one per quantum slot.

    Z errors count key-bit disagreements (after Bob and Charlie invert) among (mu,mu,mu)
    events; X errors and retained counts are kept per X-type combination under the slice.
    """
    n_trials = float(n_quantum if n_trials is None else n_trials)
    acc = SecurityAccounting(float(n_quantum), n_trials)
    cls = batch.classes
    families = set(itertools.product(Z_CLASSES, repeat=3)) | set(itertools.product(X_CLASSES, repeat=3))
    labels = np.array(["|".join(row) for row in cls]) if len(batch) else np.zeros(0, dtype=str)
    uniq, counts = np.unique(labels, return_counts=True)
    observed = dict(zip(uniq.tolist(), counts.tolist()))
    for combo in sorted(families):
        acc.gains[combo] = (float(observed.get("|".join(combo), 0)), n_trials * combo_prior(combo, cfg))

    signal = labels == "|".join(Z_SIGNAL)
    key = batch.bits[signal].astype(np.int64)
    key[:, 1:] ^= 1
    acc.z_errors_ab = float(np.count_nonzero(key[:, 0] != key[:, 1]))
    acc.z_errors_ac = float(np.count_nonzero(key[:, 0] != key[:, 2]))

    theta_total = np.asarray(theta_total, dtype=float)
    kept, expected = slice_selection(theta_total, tolerance)
    wrong = kept & (batch.parity != expected)
    for combo in sorted(set(itertools.product(X_CLASSES, repeat=3))):
        if combo == (CLASS_VAC,) * 3:
            continue
        sel = labels == "|".join(combo)
        acc.x_errors[combo] = (float(np.count_nonzero(wrong & sel)), float(np.count_nonzero(kept & sel)))
    return acc


CSV_COLUMNS = ["p1_slot", "p2_slot", "p3_slot", "basis", "bitA", "bitB", "bitC",
               "theta_total", "parity", "intensity_combo", "shared_slot"]


def write_sifted_csv(path: str | Path, batch: SiftedBatch, theta_total: np.ndarray,
                     trailer: str | None = None) -> None:
    basis, bits, combos = batch.basis, batch.bits, batch.combo_labels()
    parity, shared = batch.parity, batch.shared_slot
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i in range(len(batch)):
            th = "" if np.isnan(theta_total[i]) else f"{theta_total[i]:.6f}"
            b = bits[i] if basis[i] == BASIS_Z else ("", "", "")
            w.writerow([*batch.slots[i], basis[i], *b, th, parity[i], combos[i], int(shared[i])])
        if trailer:
            fh.write(f"# {trailer}\n")


_LETTER_TAG = {"S": Tag.SIGNAL, "D": Tag.DECOY, "V": Tag.VACUUM}


def read_sifted_csv(path: str | Path) -> tuple[SiftedBatch, np.ndarray]:
    """Rebuild a batch (tags from the combo column, phases folded into theta_total)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            rows.append(row)
    n = len(rows)
    slots = np.array([[int(r["p1_slot"]), int(r["p2_slot"]), int(r["p3_slot"])] for r in rows],
                     dtype=np.int64).reshape(n, 3)
    tags = np.array([[[_LETTER_TAG[ch] for ch in part] for part in r["intensity_combo"].split("-")]
                     for r in rows], dtype=np.uint8).reshape(n, 3, 2)
    theta = np.array([float(r["theta_total"]) if r["theta_total"] else np.nan for r in rows])
    parity = np.array([int(r["parity"]) for r in rows], dtype=np.uint8)
    # one L click on P1 reproduces the stored parity; per-port sides are not kept in the CSV
    sides = np.zeros((n, 3), dtype=np.uint8)
    sides[:, 0] = parity
    return SiftedBatch(slots, sides, tags, np.zeros((n, 3, 2), dtype=np.uint8)), theta
