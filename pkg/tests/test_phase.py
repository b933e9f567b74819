import math

import numpy as np
import pytest

from mpqcc.phase import (CalibrationError, ReferenceCounts, SignConvention, _estimate, calibrate_sign_convention,
                         compensate, estimate_pair_phase, estimate_phases, slice_selection, x_error)
from mpqcc.pipeline import inject_sign_flips, simulate


def test_fully_constructive():
    assert estimate_pair_phase(ReferenceCounts(1000, 0, 500, 500)) == 0.0


def test_quadrant_from_markers():
    # cos = 0 and sin < 0: the half-pi marker shows R excess (cos(theta + pi/2) = -sin(theta) > 0)
    th = estimate_pair_phase(ReferenceCounts(500, 500, 900, 100, 100, 900))
    assert math.isclose(th, 3 * math.pi / 2)


def test_missing_counts_give_none():
    assert estimate_pair_phase(ReferenceCounts(0, 0, 10, 3)) is None
    assert estimate_pair_phase(ReferenceCounts(10, 3, 0, 0)) is None


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ReferenceCounts(-1, 0)


def test_exact_on_expected_counts():
    thetas = np.linspace(0, 2 * np.pi, 1001, endpoint=False)
    err = [abs(np.angle(np.exp(1j * (estimate_pair_phase(ReferenceCounts.expected(t, 1e4)) - t)))) for t in thetas]
    assert max(err) <= 1e-9


def test_rms_at_ten_thousand_counts(rng):
    thetas = rng.uniform(0, 2 * np.pi, 1000)
    rows = []
    for t in thetas:
        # 10^4 counts in the plain interval and proportionally fewer in each marker block
        mean = ReferenceCounts.expected(t, 1e4).as_tuple()
        mean = np.array(mean) * np.array([1, 1, 0.05, 0.05, 0.05, 0.05])
        rows.append(rng.poisson(mean))
    est, _ = _estimate(np.array(rows))
    err = np.angle(np.exp(1j * (est - thetas)))
    assert math.sqrt(np.mean(err ** 2)) <= 0.05


def test_carry_forward():
    counts = np.zeros((3, 1, 6))
    counts[0, 0] = ReferenceCounts.expected(1.0, 1e4).as_tuple()
    theta, _ = estimate_phases(counts)
    assert np.allclose(theta[:, 0], 1.0)
    raw, _ = estimate_phases(counts, carry_forward=False)
    assert np.isnan(raw[1:, 0]).all()


def test_compensation_sums_signed_estimates():
    enc = np.array([0.3])
    th = np.array([[0.1, 0.2, 0.4]])
    assert math.isclose(compensate(enc, th)[0], 1.0)
    assert math.isclose(compensate(enc, th, SignConvention((False, True, False)))[0], 0.6)
    assert math.isclose(compensate(enc, th, enabled=False)[0], 0.3)
    # zero estimates leave only the encoded phase
    assert math.isclose(compensate(np.array([2 * math.pi + 0.5]), np.zeros((1, 3)))[0], 0.5)


def test_slice_selection():
    th = np.array([0.0, math.pi / 16, math.pi / 8, math.pi, math.pi + 0.1, 2 * math.pi - 0.05, np.nan])
    kept, expected = slice_selection(th)
    assert list(kept) == [True, True, False, True, True, True, False]
    assert list(expected[kept]) == [0, 0, 1, 1, 0]


def test_x_error_counts():
    th = np.array([0.0, 0.0, math.pi, 1.0])
    assert x_error(th, np.array([0, 1, 1, 0])) == (1, 3)


def test_vertices_in_lexicographic_order():
    labels = [c.label() for c in SignConvention.all()]
    assert labels == ["+++", "++-", "+-+", "+--", "-++", "-+-", "--+", "---"]


def test_flip_injection_mirrors_estimate():
    counts = np.array([[ReferenceCounts.expected(1.0, 1e4).as_tuple()] * 3])
    flipped = inject_sign_flips(counts, (True, False, True))
    theta, _ = estimate_phases(flipped)
    assert np.allclose(theta[0], [2 * math.pi - 1.0, 1.0, 2 * math.pi - 1.0])


def test_calibration_needs_enough_events():
    with pytest.raises(CalibrationError):
        calibrate_sign_convention(np.zeros(10), np.zeros((10, 3)), np.zeros(10), min_events=100)


@pytest.fixture(scope="module")
def x_run():
    from mpqcc.types import SystemConfig
    return simulate(SystemConfig(p_mu=0.0, p_nu=1.0).with_total_loss(30.0), 600, seed=21)


def test_no_flip_data_calibrates_to_identity(x_run):
    x = x_run.x_mask()
    conv, table = calibrate_sign_convention(x_run.batch.encoded_total[x], x_run.event_theta[x],
                                            x_run.batch.parity[x])
    assert conv == SignConvention()
    rates = {c: e / k for c, (e, k) in table.items()}
    assert all(rates[SignConvention()] < r for c, r in rates.items() if c != SignConvention())


def test_calibration_invariant_to_global_offset():
    from mpqcc.optics import DriftState
    from mpqcc.types import SystemConfig
    cfg = SystemConfig(p_mu=0.0, p_nu=1.0).with_total_loss(30.0)
    start = DriftState.random(np.random.default_rng(3))
    shifted = DriftState(np.mod(start.theta + 1.234, 2 * np.pi))
    a = simulate(cfg, 400, seed=8, convention=None, initial=start)
    b = simulate(cfg, 400, seed=8, convention=None, initial=shifted)
    assert a.convention == b.convention
    assert np.allclose(a.theta_hat, b.theta_hat, atol=1e-9)


def test_compensation_matters(x_run):
    x = x_run.x_mask()
    enc, th, par = x_run.batch.encoded_total[x], x_run.event_theta[x], x_run.batch.parity[x]
    e_on, k_on = x_error(compensate(enc, th), par)
    e_flip, k_flip = x_error(compensate(enc, th, SignConvention((True, False, False))), par)
    assert e_on / k_on < e_flip / k_flip
    assert 0.35 < e_on / k_on < 0.43
