import math

import pytest

from mpqcc.types import (ConfigError, IntensityClass, PhaseIndex, PulseDescriptor, Role, SystemConfig, Tag,
                         User, apply_overrides, format_config, parse_config, operating_point,
                         total_loss_from_transmittance, transmittance_from_total_loss, validate_config)


def test_default_config_is_valid():
    cfg = validate_config(SystemConfig(mu=0.3535, nu=0.0413, p_mu=0.15, p_nu=0.35, f_ec=1.06,
                                       detector_efficiency=0.81))
    assert math.isclose(cfg.p_vac, 0.5)


def test_ordering_violation_is_named():
    with pytest.raises(ConfigError, match="nu < mu violated"):
        validate_config(SystemConfig(mu=0.2, nu=0.3))


def test_probability_mass_violation_is_named():
    with pytest.raises(ConfigError, match=r"p_mu\+p_nu <= 1 violated"):
        validate_config(SystemConfig(p_mu=0.7, p_nu=0.5))


def test_all_violations_reported_together():
    with pytest.raises(ConfigError) as exc:
        validate_config(SystemConfig(mu=0.2, nu=0.3, p_mu=0.7, p_nu=0.5, f_ec=0.9))
    assert len(exc.value.violations) == 3


def test_quantum_rate_matches_duty():
    assert math.isclose(SystemConfig().quantum_rate, 143.52e6)


def test_loss_conversion_round_trip():
    eta = transmittance_from_total_loss(66.3)
    assert math.isclose(eta ** 3, 10 ** -6.63, rel_tol=1e-12)
    assert math.isclose(total_loss_from_transmittance(eta), 66.3)
    # the default per-arm value is the 66.3 dB column, rounded to three figures
    assert round(eta, 5) == pytest.approx(SystemConfig().per_arm_transmittance, abs=2e-5)


def test_operating_point_rows():
    c = operating_point(51.8)
    assert (c.mu, c.nu) == (0.2572, 0.0209)
    assert math.isclose(c.per_arm_transmittance ** 3, 10 ** -5.18)


def test_parse_and_format_round_trip():
    cfg = SystemConfig(mu=0.3, window_slots=1234)
    assert parse_config(format_config(cfg)) == cfg


def test_parse_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("bogus = 1")
    with pytest.raises(ConfigError, match="expected"):
        parse_config("mu 0.3")


def test_overrides_take_precedence():
    cfg = apply_overrides(parse_config("mu = 0.4\n# comment\n"), {"mu": "0.5", "window_slots": "10"})
    assert cfg.mu == 0.5 and cfg.window_slots == 10


def test_phase_index_and_intensity_validation():
    assert math.isclose(PhaseIndex(4).radians, math.pi / 2)
    with pytest.raises(ValueError):
        PhaseIndex(16)
    with pytest.raises(ValueError):
        IntensityClass(Tag.VACUUM, 0.1)


def test_pulse_role_must_match_intensity():
    ref = IntensityClass(Tag.REFERENCE, 0.3)
    with pytest.raises(ValueError):
        PulseDescriptor(User.A, 0, Role.QUANTUM, ref, 0.0)
    PulseDescriptor(User.A, 0, Role.MARKER_HALF_PI, ref, math.pi / 2)
