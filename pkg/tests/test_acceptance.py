"""Acceptance criteria. Each test prints one PASS/FAIL line (run with -s or read test_output.txt)."""

import itertools
import math

import numpy as np
import pytest

from mpqcc import analytic as A
from mpqcc import security as S
from mpqcc.optics import run_optics, substream
from mpqcc.pairing import coincidence_count, pair_indices
from mpqcc.phase import ReferenceCounts, SignConvention, _estimate, estimate_pair_phase
from mpqcc.pipeline import process, simulate
from mpqcc.types import SystemConfig, operating_point
from oracles import brute_force_pairing, constructed_accounting, triple_violations

TARGET_RATES = {51.8: 1.64e-7, 66.3: 3.75e-8}
TARGET_RATIO = 4.36
X_ENRICHED = dict(p_mu=0.0, p_nu=1.0)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def test_c1_rate_conversion(report):
    cfg = SystemConfig()
    got = {k: S.rate_conversion(r, 1.0, cfg)[1] for k, r in TARGET_RATES.items()}
    target = {51.8: 23.5, 66.3: 5.39}
    ok = all(abs(got[k] / target[k] - 1) <= 0.01 for k in target)
    report(1, ok, f"51.8 dB -> {got[51.8]:.3f} bit/s (23.5), 66.3 dB -> {got[66.3]:.3f} bit/s (5.39), tol 1%")
    assert ok


def test_c2_ratio_and_slope(report):
    ratio = TARGET_RATES[51.8] / TARGET_RATES[66.3]
    pts = A.analytic_rates(operating_point(66.3), np.arange(40.0, 70.01, 2.5))
    k, kc = A.slope(pts), A.slope(pts, coincidence=True)
    ok = abs(ratio / TARGET_RATIO - 1) <= 0.02 and 0.3 <= k <= 1.2 and k < kc
    report(2, ok, f"rate ratio {ratio:.3f} vs {TARGET_RATIO} (tol 2%); sweep slope {k:.3f} in [0.3, 1.2], "
                  f"coincidence slope {kc:.3f}")
    assert ok


@pytest.mark.slow
def test_c3_error_floors(report):
    # Z error from the operating probabilities; X error from an X-enriched run with the same
    # intensities (the operating probabilities leave only a handful of kept X events at 1e7 slots)
    z_run = simulate(SystemConfig().with_total_loss(30.0), 3500, seed=301)
    z_acc = z_run.accounting()
    x_run = simulate(SystemConfig(**X_ENRICHED).with_total_loss(30.0), 3500, seed=302)
    e, kept = x_run.accounting().x_errors[S.X_SIGNAL]
    ex = e / kept
    ez = max(z_acc.E_Z_AB, z_acc.E_Z_AC)
    ok = z_run.n_quantum >= 1e7 and x_run.n_quantum >= 1e7 and 0.37 <= ex <= 0.43 and ez < 0.01
    report(3, ok, f"X error {ex:.4f} over {kept:.0f} kept events (in [0.37, 0.43]); Z error {ez:.2e} over "
                  f"{z_acc.s_Z_mu3:.0f} events (< 1%); quantum slots {z_run.n_quantum:.3g}, {x_run.n_quantum:.3g}")
    assert ok


@pytest.mark.slow
def test_c4_sign_convention_cube(report):
    cfg = SystemConfig(**X_ENRICHED).with_total_loss(30.0)
    recovered = strict = total = 0
    for seed in range(20):
        run = run_optics(cfg, 2000, 4000 + seed)
        for flips in itertools.product((False, True), repeat=3):
            res = process(cfg, run, flips=flips, convention=None)
            table = res.sign_table()
            rate = {c: e / k for c, (e, k) in table.items()}
            truth = SignConvention(flips)
            total += 1
            recovered += res.convention == truth
            strict += all(rate[truth] < r for c, r in rate.items() if c != truth)
    ok = recovered == strict == total
    report(4, ok, f"recovered {recovered}/{total}, strictly minimal {strict}/{total} (20 seeds x 8 vertices)")
    assert ok


def test_c5_phase_estimator(report):
    rng = np.random.default_rng(505)
    truth = rng.uniform(0, 2 * np.pi, 1000)
    per_setting = 10_000 // 3
    probs = np.stack([(1 + np.cos(truth + s)) / 2 for s in (0.0, np.pi / 2, 3 * np.pi / 2)], axis=1)
    right = rng.binomial(per_setting, probs)
    counts = np.stack([right[:, 0], per_setting - right[:, 0], right[:, 1], per_setting - right[:, 1],
                       right[:, 2], per_setting - right[:, 2]], axis=1)
    est, _ = _estimate(counts)
    d = np.angle(np.exp(1j * (est - truth)))
    rms = float(np.sqrt(np.mean(d ** 2)))
    exact = max(abs(np.angle(np.exp(1j * (estimate_pair_phase(ReferenceCounts.expected(t, 1e4)) - t))))
                for t in truth)
    ok = rms <= 0.05 and exact <= 1e-9
    report(5, ok, f"RMS {rms:.4f} rad at 1e4 counts (<= 0.05); expected-count error {exact:.1e} (<= 1e-9)")
    assert ok


def test_c6_pairing_vs_coincidence(report):
    n, p, w = 10**7, 1e-3, 50_000
    rng = substream(606, 0)
    streams = [np.flatnonzero(rng.random(n) < p) for _ in range(3)]
    clicks = sum(len(s) for s in streams)
    triples = len(pair_indices(*streams, w))
    fraction = 3 * triples / clicks
    coinc_expected = p ** 3 * n
    coinc = max(coincidence_count(*streams), coinc_expected)
    violations = mismatches = 0
    orng = np.random.default_rng(607)
    for _ in range(1000):
        span = int(orng.integers(31, 400))
        s = [np.sort(orng.choice(span, int(orng.integers(0, 31)), replace=False)) for _ in range(3)]
        win = int(orng.integers(0, 40))
        got = [tuple(map(int, t)) for t in pair_indices(*s, win)]
        violations += len(triple_violations(*(list(x) for x in s), got, win))
        mismatches += got != brute_force_pairing(*(list(x) for x in s), win)
    ok = fraction >= 0.9 and triples >= 1e3 * coinc and violations == 0 and mismatches == 0
    report(6, ok, f"{fraction:.3f} of clicks paired (>= 0.9); {triples} triples vs {coinc:.3g} coincidences "
                  f"(>= 1e3x); oracle: {violations} violations, {mismatches} mismatches over 1000 cases")
    assert ok


def test_c7_decoy_soundness(report):
    cfg = SystemConfig()
    worst, over = 1.0, 0
    for seed in range(100):
        acc, y111, _ = constructed_accounting(cfg, 7000 + seed)
        b = S.decoy_lp_bounds(acc, cfg, cutoff=3, exact=True)
        over += b.y111_lower > y111 * (1 + 1e-9)
        worst = min(worst, b.y111_lower / y111)
    rng = np.random.default_rng(77)
    eps, mean = 1e-2, 1e4
    xs = rng.poisson(mean, 100_000)
    beta = math.log(1 / eps)
    upper = xs + beta + np.sqrt(2 * beta * xs + beta ** 2)
    lower = np.maximum(0, xs - np.sqrt(2 * beta * xs))
    viol = float(np.mean((mean < lower) | (mean > upper)))
    # spot-check the vectorised copy against the library
    assert S.chernoff_bounds(float(xs[0]), eps).upper == pytest.approx(upper[0])
    ok = over == 0 and worst >= 0.8 and viol <= 2 * eps
    report(7, ok, f"LP overshoots {over}/100, worst recovery {worst:.3f} (>= 0.8); "
                  f"Chernoff violation {viol:.2e} (<= {2 * eps:.0e})")
    assert ok


def test_c8_key_length(report):
    rng = np.random.default_rng(808)
    zero_ok = all(S.key_length_from(s, e, s2, a, b, 1.06) == 0.0 for s, e, s2, a, b in
                  zip(rng.uniform(0, 1e6, 200), rng.uniform(0.5, 1.0, 200), rng.uniform(0, 1e6, 200),
                      rng.uniform(0, 0.5, 200), rng.uniform(0, 0.5, 200)))
    mono_ok = True
    base = np.array([1e6, 0.1, 2e6, 0.01, 0.01, 1.06])
    sign = [+1, -1, -1, -1, -1, -1]  # increasing in s111, decreasing in everything else
    for i, sg in enumerate(sign):
        vals = [S.key_length_from(*np.where(np.arange(6) == i, base * f, base)) for f in (0.9, 1.0, 1.1)]
        mono_ok &= all(sg * (b - a) >= -1e-9 for a, b in zip(vals, vals[1:]))
    cfg = A.fit_dark_count(operating_point(66.3), A.REPORTED_ERRORS[66.3][0])
    pt = A.analytic_point(cfg)
    ratio = pt.rate_per_pulse / TARGET_RATES[66.3]
    ok = zero_ok and mono_ok and pt.key_length > 0 and 1 / 3 <= ratio <= 3
    report(8, ok, f"zero for e_ph >= 0.5: {zero_ok}; monotone: {mono_ok}; 66.3 dB rate "
                  f"{pt.rate_per_pulse:.3e} bits/pulse, {ratio:.2f}x of 3.75e-8 (within 3x)")
    assert ok


def test_c9_repeaterless_crossing(report):
    parts, ok = [], True
    for loss, (ez, _) in A.REPORTED_ERRORS.items():
        pt = A.analytic_point(A.fit_dark_count(operating_point(loss), ez))
        ok &= pt.rate_per_pulse > pt.bound_per_pulse
        parts.append(f"{loss} dB: {pt.rate_per_pulse:.3e} vs bound {pt.bound_per_pulse:.3e}")
    report(9, ok, "; ".join(parts))
    assert ok
