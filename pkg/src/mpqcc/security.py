"""Finite-size decoy-state estimation and secure key length.

Gains are normalised per quantum slot: a combination of per-user pattern classes
``k`` has ``trials = N * prior(k)`` and ``Q_k = count_k / trials``. Yields ``Y_n`` are
then per-slot probabilities in [0, 1], indexed by the photon numbers ``n`` the three
users put into their two paired modes.

Z-type classes ({mu,0}, {nu,0}, {0,0}) constrain the Z yields; X-type classes
({nu,nu}, {0,0}) constrain the X yields. Only yields with every n_u <= 1 are shared
between the bases. X error-yields of photon-number terms with a silent user are
pinned to half the yield: with one user contributing no photon its encoded phase is
independent of everything observed, so the expected sign is a coin flip.

Truncation: the unknown tail of a combination (terms with some n_u > Nc) is bounded in
two ways, both sound. Either by its Poisson mass (yields are at most one), or by a
multiple of the tail of the brightest combination of the same basis, using that the
ratio of two Poisson weights is monotone in n. The second bound is what keeps the
dim-decoy constraints informative at small cutoffs.

Paired events are not one-slot trials: pairing collects clicks from three different
slots. ``trials`` is therefore counted in candidate location triples, which makes each
yield the probability that all three locations click with the recorded pattern.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.stats import poisson

from .types import CLASS_MU, CLASS_NU, CLASS_NUNU, CLASS_VAC, SystemConfig

Z_CLASSES = (CLASS_MU, CLASS_NU, CLASS_VAC)
X_CLASSES = (CLASS_NUNU, CLASS_VAC)
X_SIGNAL = (CLASS_NUNU, CLASS_NUNU, CLASS_NUNU)
Z_SIGNAL = (CLASS_MU, CLASS_MU, CLASS_MU)


@dataclass(frozen=True)
class ConfidenceBound:
    observed: float
    lower: float
    upper: float
    epsilon: float


def chernoff_bounds(x: float, epsilon: float) -> ConfidenceBound:
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if x < 0:
        raise ValueError("observed count must be non-negative")
    beta = math.log(1 / epsilon)
    upper = x + beta + math.sqrt(2 * beta * x + beta * beta)
    lower = max(0.0, x - math.sqrt(2 * beta * x))
    return ConfidenceBound(x, lower, upper, epsilon)


def binary_entropy(x):
    """H2 in bits; accepts scalars or arrays, with H2(0) = H2(1) = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("binary entropy argument outside [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -arr * np.log2(arr) - (1 - arr) * np.log2(1 - arr)
    h = np.where((arr == 0) | (arr == 1), 0.0, h)
    return float(h) if np.ndim(h) == 0 else h


def class_mean(cls: str, cfg: SystemConfig) -> float:
    """Mean total photon number a user sends over its two paired modes."""
    return {CLASS_MU: cfg.mu, CLASS_NU: cfg.nu, CLASS_VAC: 0.0, CLASS_NUNU: 2 * cfg.nu}[cls]


def class_prior(cls: str, cfg: SystemConfig) -> float:
    p0 = cfg.p_vac
    return {CLASS_MU: 2 * cfg.p_mu * p0, CLASS_NU: 2 * cfg.p_nu * p0,
            CLASS_VAC: p0 * p0, CLASS_NUNU: cfg.p_nu * cfg.p_nu}[cls]


def combo_prior(combo, cfg: SystemConfig) -> float:
    return math.prod(class_prior(c, cfg) for c in combo)


@dataclass
class SecurityAccounting:
    n_quantum: float
    n_trials: float = 0.0  # candidate location triples behind the paired events
    gains: dict = field(default_factory=dict)  # combo -> (count, trials)
    z_errors_ab: float = 0.0  # key-bit disagreements A/B among (mu,mu,mu) Z events
    z_errors_ac: float = 0.0
    x_errors: dict = field(default_factory=dict)  # combo -> (errors, kept)

    @property
    def s_Z_mu3(self) -> float:
        return self.gains.get(Z_SIGNAL, (0.0, 0.0))[0]

    @property
    def E_Z_AB(self) -> float:
        return self.z_errors_ab / self.s_Z_mu3 if self.s_Z_mu3 else 0.0

    @property
    def E_Z_AC(self) -> float:
        return self.z_errors_ac / self.s_Z_mu3 if self.s_Z_mu3 else 0.0

    def x_error_rate(self, combo=X_SIGNAL) -> float:
        e, k = self.x_errors.get(combo, (0, 0))
        return e / k if k else float("nan")

    def check(self) -> None:
        for combo, (count, trials) in self.gains.items():
            if not 0 <= count <= trials:
                raise ValueError(f"gain count {count} outside [0, trials={trials}] for {combo}")
        for combo, (e, k) in self.x_errors.items():
            if not 0 <= e <= k:
                raise ValueError(f"error count {e} outside [0, {k}] for {combo}")

    def n_chernoff(self) -> int:
        """Number of Chernoff applications sharing the failure budget."""
        return len(self.gains) + len(self.x_errors) + 3


def location_triples(n_triples: float, click_fractions) -> float:
    """Candidate location triples behind ``n_triples`` paired events.

    A triple needs a click at each of three slots; with per-port single-click fractions
    P_p the paired events correspond to n_triples / (P_1 P_2 P_3) location triples.
    """
    prod = math.prod(click_fractions)
    if prod <= 0:
        raise ValueError("click fractions must be positive")
    return n_triples / prod


class DecoyError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecoyBounds:
    y111_lower: float
    ey111_upper: float
    s111_lower: float
    e111ph_upper: float


def _photon_grid(cutoff: int) -> np.ndarray:
    return np.array(list(itertools.product(range(cutoff + 1), repeat=3)))


def _weights(combo, grid: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    means = [class_mean(c, cfg) for c in combo]
    return np.prod([poisson.pmf(grid[:, u], means[u]) for u in range(3)], axis=0)


def _tail_ratio(combo, bright, cfg: SystemConfig, cutoff: int) -> float:
    """max over photon numbers outside the grid of w_combo(n) / w_bright(n)."""
    factors = []
    for c, b in zip(combo, bright):
        m, big = class_mean(c, cfg), class_mean(b, cfg)
        if m > big:
            return math.inf
        if m == big:
            factors.append((1.0, 1.0))
        else:
            # (anywhere, beyond the cutoff); the ratio e^(M-m) (m/M)^n falls with n
            f = math.exp(big - m)
            factors.append((f, f * (m / big) ** (cutoff + 1)))
    return max(math.prod(f[1] if u == v else f[0] for v, f in enumerate(factors))
               for u in range(len(factors)))


MAX_CUTOFF = 12
TAIL_FRACTION = 1e-3


def adaptive_cutoff(acc: SecurityAccounting, cfg: SystemConfig) -> int:
    """Smallest cutoff >= cfg.decoy_cutoff whose Poisson tail mass is negligible.

    Yields of dim combinations can be far below one, so a tail bounded only by Y <= 1
    must be small next to the gain itself or the constraint carries no information.
    Combinations with a signal-class user are exempt: they enter through their upper
    bound, which needs no tail term.
    """
    gains = [(combo, count / trials) for combo, (count, trials) in acc.gains.items()
             if trials > 0 and count > 0 and CLASS_MU not in combo]
    for nc in range(cfg.decoy_cutoff, MAX_CUTOFF):
        if all(_tail_mass(combo, cfg, nc) <= TAIL_FRACTION * q for combo, q in gains):
            return nc
    return MAX_CUTOFF


def _tail_mass(combo, cfg: SystemConfig, cutoff: int) -> float:
    return 1.0 - math.prod(poisson.cdf(cutoff, class_mean(c, cfg)) for c in combo)


def decoy_lp_bounds(acc: SecurityAccounting, cfg: SystemConfig, cutoff: int | None = None,
                    epsilon: float | None = None, exact: bool = False) -> DecoyBounds:
    """Lower bound on the single-photon-triple Z yield and upper bound on its phase error.

    ``exact=True`` treats the observed gains as exact expectations (no Chernoff widening),
    which is how constructed instances with known yields are checked.
    """
    cutoff = adaptive_cutoff(acc, cfg) if cutoff is None else cutoff
    if cutoff < 2:
        raise ValueError("photon-number cutoff must be >= 2")
    eps = (cfg.epsilon if epsilon is None else epsilon) / acc.n_chernoff()
    grid = _photon_grid(cutoff)
    m = len(grid)
    shared = np.flatnonzero(np.all(grid <= 1, axis=1))
    silent = np.any(grid == 0, axis=1)
    i111 = int(np.flatnonzero(np.all(grid == 1, axis=1))[0])

    def interval(count, trials):
        if exact:
            return count / trials, count / trials
        b = chernoff_bounds(count, eps)
        return b.lower / trials, b.upper / trials

    z_rows, x_rows = [], []
    for combo, (count, trials) in sorted(acc.gains.items()):
        if trials <= 0:
            continue
        w = _weights(combo, grid, cfg)
        lo, hi = interval(count, trials)
        tail = max(0.0, 1.0 - w.sum())
        if all(c in Z_CLASSES for c in combo):
            z_rows.append((w, lo, hi, tail, combo))
        if all(c in X_CLASSES for c in combo):
            x_rows.append((w, lo, hi, tail, combo))
    if not z_rows:
        raise DecoyError("no Z-type gains to constrain the single-photon yield")

    err_rows = []
    for combo, (errors, kept) in sorted(acc.x_errors.items()):
        if kept <= 0 or combo not in acc.gains:
            continue
        count, trials = acc.gains[combo]
        w = _weights(combo, grid, cfg)
        # kept events are a phase-slice thinning of the combination's events, so the
        # error gain is the error count over the trials that survive the same thinning
        kept_trials = trials * kept / count
        eq_lo, eq_hi = interval(errors, kept_trials)
        err_rows.append((w, eq_lo, eq_hi, max(0.0, 1.0 - w.sum()), combo))

    scale = max([hi for _, _, hi, _, _ in z_rows + x_rows] + [1e-300])
    gains_lookup = {combo: (w, lo, hi) for w, lo, hi, _, combo in z_rows + x_rows}
    rel = 1e-9 if exact else 0.0
    # variable layout: [yZ (m), yX (m), eX (m)], all divided by scale
    nvar = 3 * m
    a_ub, b_ub = [], []

    def add_two_sided(offset, w, lo, hi, tail):
        row = np.zeros(nvar)
        row[offset:offset + m] = w
        a_ub.append(row)
        b_ub.append(hi * (1 + rel) / scale + 1e-15)
        a_ub.append(-row)
        b_ub.append(-(lo * (1 - rel) - tail) / scale + 1e-15)

    def add_coupled(offset, w, lo, combo, bright):
        # sum_grid w Y >= lo - rho * (hi_bright - sum_grid w_bright Y)
        if bright not in gains_lookup or combo == bright:
            return
        rho = _tail_ratio(combo, bright, cfg, cutoff)
        wb, _, hi_b = gains_lookup[bright]
        row = np.zeros(nvar)
        row[offset:offset + m] = -(w - rho * wb)
        a_ub.append(row)
        b_ub.append(-(lo * (1 - rel) - rho * hi_b * (1 + rel)) / scale + 1e-15)

    for w, lo, hi, tail, combo in z_rows:
        add_two_sided(0, w, lo, hi, tail)
        add_coupled(0, w, lo, combo, Z_SIGNAL)
    for w, lo, hi, tail, combo in x_rows:
        add_two_sided(m, w, lo, hi, tail)
        add_coupled(m, w, lo, combo, X_SIGNAL)
    for w, lo, hi, tail, _ in err_rows:
        add_two_sided(2 * m, w, lo, hi, tail)
    # eX <= yX for every photon-number term
    for n in range(m):
        row = np.zeros(nvar)
        row[2 * m + n], row[m + n] = 1.0, -1.0
        a_ub.append(row)
        b_ub.append(0.0)
    a_eq, b_eq = [], []
    for n in shared:
        row = np.zeros(nvar)
        row[n], row[m + n] = 1.0, -1.0
        a_eq.append(row)
        b_eq.append(0.0)
    for n in np.flatnonzero(silent):
        row = np.zeros(nvar)
        row[2 * m + n], row[m + n] = 1.0, -0.5
        a_eq.append(row)
        b_eq.append(0.0)
    bounds = [(0.0, 1.0 / scale)] * nvar
    lp = dict(A_ub=np.array(a_ub), b_ub=np.array(b_ub), A_eq=np.array(a_eq), b_eq=np.array(b_eq),
              bounds=bounds, method="highs")

    c = np.zeros(nvar)
    c[i111] = 1.0
    res = linprog(c, **lp)
    _check(res, "minimum single-photon yield")
    y111 = max(0.0, res.x[i111] * scale)

    ey111 = math.inf
    if err_rows:
        c = np.zeros(nvar)
        c[2 * m + i111] = -1.0
        res = linprog(c, **lp)
        _check(res, "maximum single-photon error yield")
        ey111 = max(0.0, res.x[2 * m + i111] * scale)

    e111 = 0.5 if y111 <= 0 else min(0.5, ey111 / y111)
    count, trials = acc.gains.get(Z_SIGNAL, (0.0, 0.0))
    w111 = _weights(Z_SIGNAL, grid[[i111]], cfg)[0]
    return DecoyBounds(y111, ey111, trials * w111 * y111, e111)


def _check(res, what: str) -> None:
    if res.status == 2:
        raise DecoyError(f"infeasible decoy LP ({what}): observed statistics are inconsistent")
    if res.status == 3:
        raise DecoyError(f"unbounded decoy LP ({what}): constraints are missing")
    if res.status != 0:
        raise DecoyError(f"decoy LP failed ({what}): {res.message}")


def key_length_from(s111_lower: float, e111ph_upper: float, s_mu3_upper: float,
                    e_ab_upper: float, e_ac_upper: float, f_ec: float) -> float:
    """Secure key length, clamped at zero; error rates above 1/2 count as 1/2."""
    clip = lambda e: min(max(e, 0.0), 0.5)  # noqa: E731
    first = s111_lower * (1 - binary_entropy(clip(e111ph_upper)))
    leak = f_ec * s_mu3_upper * max(binary_entropy(clip(e_ab_upper)), binary_entropy(clip(e_ac_upper)))
    return max(0.0, first - leak)


def key_length(acc: SecurityAccounting, bounds: DecoyBounds, cfg: SystemConfig,
               exact: bool = False) -> float:
    s = acc.s_Z_mu3
    if exact:
        s_up, e_ab, e_ac = s, acc.E_Z_AB, acc.E_Z_AC
    else:
        eps = cfg.epsilon / acc.n_chernoff()
        s_up = chernoff_bounds(s, eps).upper
        e_ab = chernoff_bounds(acc.z_errors_ab, eps).upper / s if s else 0.5
        e_ac = chernoff_bounds(acc.z_errors_ac, eps).upper / s if s else 0.5
    return key_length_from(bounds.s111_lower, bounds.e111ph_upper, s_up, e_ab, e_ac, cfg.f_ec)


def rate_conversion(l: float, n_quantum: float, cfg: SystemConfig) -> tuple[float, float]:
    """(bits per quantum pulse, bits per second at the quantum-light rate)."""
    if n_quantum <= 0:
        raise ValueError("number of quantum slots must be positive")
    per_pulse = l / n_quantum
    return per_pulse, per_pulse * cfg.quantum_rate


def repeaterless_bound(eta: float) -> float:
    """-log2(1 - eta^2) bits per use of a channel with transmittance ``eta``."""
    if not 0 < eta < 1:
        raise ValueError(f"transmittance must lie in (0, 1), got {eta}")
    return -math.log1p(-eta * eta) / math.log(2)
