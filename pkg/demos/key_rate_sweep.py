"""
Key rate against channel loss
=============================

Expected statistics are pushed through the decoy linear program and the key
length formula at each loss. The rate falls roughly with the square root of
the end-to-end transmittance, so it overtakes the repeaterless bound at high
loss.
"""

import numpy as np

from mpqcc import analytic
from mpqcc.types import operating_point

cfg = analytic.fit_dark_count(operating_point(66.3), 0.001)
print(f"dark count fitted to a 0.1% Z error: {cfg.dark_count_prob:.3e} per slot")

points = analytic.analytic_rates(cfg, np.arange(40.0, 71.0, 5.0))
print(f"{'loss dB':>8} {'bits/pulse':>11} {'bound':>11} {'s111':>10} {'e_ph':>6}")
for p in points:
    print(f"{p.total_loss_db:8.1f} {p.rate_per_pulse:11.3e} {p.bound_per_pulse:11.3e} "
          f"{p.bounds.s111_lower:10.3e} {p.bounds.e111ph_upper:6.3f}")

print(f"slope d log R / d log eta: {analytic.slope(points):.3f}")
print(f"same-slot coincidence model slope: {analytic.slope(points, coincidence=True):.3f}")
