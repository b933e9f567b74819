"""
Pairing clicks across slots
===========================

Three ports each fire with a small probability per slot. Requiring all three
to fire in the same slot is hopeless at high loss, but pairing clicks that
fall within a common window keeps almost every click.
"""

import numpy as np

from mpqcc.optics import substream
from mpqcc.pairing import coincidence_count, pair_indices

n_slots = 2_000_000
rng = substream(2024, 0)

for p_click in (1e-2, 1e-3):
    streams = [np.flatnonzero(rng.random(n_slots) < p_click) for _ in range(3)]
    clicks = sum(len(s) for s in streams)
    print(f"P_click = {p_click:g}: {clicks} clicks, "
          f"{coincidence_count(*streams)} same-slot triples (expected {p_click**3 * n_slots:.2g})")
    for window in (10, 100, 1000, 10_000, 100_000):
        used = 3 * len(pair_indices(*streams, window))
        print(f"  window {window:>7d} slots: {used / clicks:6.1%} of clicks paired")

# %%
# The paired fraction saturates once the window holds a few clicks per port,
# while the same-slot count scales as P_click cubed.
