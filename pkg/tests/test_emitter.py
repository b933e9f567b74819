import math

import numpy as np
import pytest

from mpqcc.emitter import (PULSE_DTYPE, build_frame_schedule, dump_pulses, load_pulses, pulse_records,
                           sample_pulse, sample_quantum)
from mpqcc.types import Role, SystemConfig, Tag, User


def test_frame_layout_counts():
    sched = build_frame_schedule(SystemConfig(quantum_duty=0.28704), frame_len=1000)
    counts = sched.counts()
    assert counts[Role.QUANTUM] == 288
    assert counts[Role.REFERENCE] == 641
    assert counts[Role.MARKER_HALF_PI] == 36
    assert counts[Role.MARKER_THREE_HALF_PI] == 35
    assert sum(counts.values()) == 1000


def test_exact_fraction():
    assert build_frame_schedule(SystemConfig(quantum_duty=0.5), frame_len=500).n_quantum == 250


def test_full_duty_rejected():
    with pytest.raises(ValueError):
        build_frame_schedule(SystemConfig(quantum_duty=1.0), frame_len=1000)


def test_quantum_block_first_and_markers_rotate():
    sched = build_frame_schedule(SystemConfig(), frame_len=1000)
    assert np.all(sched.roles[:288] == Role.QUANTUM)
    half = np.flatnonzero(sched.roles == Role.MARKER_HALF_PI)
    assert list(sched.marker_user[half[:6]]) == [0, 1, 2, 0, 1, 2]
    # a user that is not modulating a marker slot sends plain reference there
    assert sched.user_role(User.B, half[0]) == Role.REFERENCE
    assert sched.user_role(User.A, half[0]) == Role.MARKER_HALF_PI


@pytest.mark.parametrize("role, offset", [(Role.REFERENCE, 0.0), (Role.MARKER_HALF_PI, math.pi / 2),
                                          (Role.MARKER_THREE_HALF_PI, 3 * math.pi / 2)])
def test_non_quantum_pulses(role, offset, cfg, rng):
    p = sample_pulse(User.A, 5, role, cfg, rng)
    assert p.intensity.tag is Tag.REFERENCE
    assert p.phase == offset


def test_quantum_pulse_phase_on_grid(cfg, rng):
    p = sample_pulse(User.C, 0, Role.QUANTUM, cfg, rng)
    assert math.isclose(p.phase, p.phase_index.radians)


def test_signal_fraction(cfg, rng):
    tags, phases = sample_quantum(cfg, rng, 10**6)
    assert abs(np.mean(tags == Tag.SIGNAL) - 0.15) < 0.002
    assert abs(np.mean(tags == Tag.DECOY) - 0.35) < 0.003
    assert phases.max() == 15 and phases.min() == 0


def test_pulse_dump_round_trip(tmp_path, cfg, rng):
    pulses = [sample_pulse(User(i % 3), i, Role.QUANTUM if i % 2 else Role.REFERENCE, cfg, rng)
              for i in range(20)]
    rec = pulse_records(pulses)
    path = tmp_path / "pulses.bin"
    dump_pulses(path, rec)
    back = load_pulses(path)
    assert back.dtype == PULSE_DTYPE
    assert np.array_equal(back, rec)
    assert path.stat().st_size == 20 * 12
