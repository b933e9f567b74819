"""
How tight is the decoy bound?
=============================

Build gains from a known photon-number yield table, then ask the linear
program for the single-photon triple yield. With exact gains the bound sits
just below the truth; finite statistics pull it further down.
"""

import itertools

import numpy as np

from mpqcc import security as S
from mpqcc.types import SystemConfig

cfg = SystemConfig()
grid = np.array(list(itertools.product(range(13), repeat=3)))
t = 0.15
Y = np.prod(1 - (1 - t) ** grid, axis=1)
y111 = Y[np.flatnonzero(np.all(grid == 1, axis=1))[0]]

for n in (1e10, 1e12, 1e14):
    acc = S.SecurityAccounting(n)
    for combo in set(itertools.product(S.Z_CLASSES, repeat=3)) | set(itertools.product(S.X_CLASSES, repeat=3)):
        trials = n * S.combo_prior(combo, cfg)
        acc.gains[combo] = (trials * (S._weights(combo, grid, cfg) @ Y), trials)
    exact = S.decoy_lp_bounds(acc, cfg, exact=True).y111_lower
    finite = S.decoy_lp_bounds(acc, cfg).y111_lower
    print(f"N = {n:.0e}: true {y111:.4e}  exact-gain bound {exact:.4e}  finite-size bound {finite:.4e}")
