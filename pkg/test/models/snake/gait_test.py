import sys
import os

# Add the project root to `sys.path`
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../../..")))

import math

import numpy as np
import pytest

from src.models.snake.gait import (
    GaitParams,
    amplitude_envelope,
    serpenoid_from_phase,
    serpenoid_targets,
    steering_bias,
)


def test_serpenoid_examples():
    assert serpenoid_targets(0.0, GaitParams(0.8, 2.0, 0.5), 1)[0] == 0.0
    assert serpenoid_targets(0.0, GaitParams(1.0, 1.0, math.pi / 2), 2)[1] == pytest.approx(-1.0)
    assert serpenoid_targets(1.0, GaitParams(0.5, math.pi, math.pi / 4), 3)[2] == pytest.approx(0.5)


def test_bounded_by_amplitude():
    params = GaitParams(0.6, 3.0, 0.4)
    for t in np.linspace(0.0, 20.0, 301):
        assert np.all(np.abs(serpenoid_targets(t, params, 17)) <= 0.6)


def test_traveling_wave():
    params = GaitParams(0.6, 3.0, 0.4)
    lag = params.phase_offset / params.speed
    for t in (1.0, 2.5, 7.0):
        now = serpenoid_targets(t, params, 17)
        before = serpenoid_targets(t - lag, params, 17)
        np.testing.assert_allclose(now[1:], before[:-1], atol=1e-12)


def test_periodic():
    params = GaitParams(0.6, 3.0, 0.4)
    period = 2 * math.pi / params.speed
    for t in (0.0, 0.3, 4.1):
        np.testing.assert_allclose(
            serpenoid_targets(t + period, params, 17), serpenoid_targets(t, params, 17), atol=1e-12
        )


def test_default_phase_is_one_body_wave():
    params = GaitParams()
    assert params.resolved_phase(17) == pytest.approx(2 * math.pi / 17)
    assert params.resolved_phase(5) == pytest.approx(2 * math.pi / 5)
    assert GaitParams(phase_offset=0.3).resolved_phase(17) == 0.3


def test_from_phase_matches_constant_speed():
    params = GaitParams(0.6, 3.0, 0.4)
    t = 1.7
    np.testing.assert_array_equal(
        serpenoid_from_phase(params.speed * t, params.amplitude, params.phase_offset, 9),
        serpenoid_targets(t, params, 9),
    )


def test_invalid():
    with pytest.raises(ValueError):
        GaitParams(amplitude=-0.1)
    with pytest.raises(ValueError):
        GaitParams(speed=-1.0)
    with pytest.raises(ValueError):
        GaitParams(phase_offset=float("nan"))
    with pytest.raises(ValueError):
        serpenoid_targets(0.0, GaitParams(), 0)
    with pytest.raises(ValueError):
        GaitParams(ramp_cycles=0.1)
    with pytest.raises(ValueError):
        GaitParams(heading_gain=-1.0)
    with pytest.raises(ValueError):
        GaitParams(initial_phase=float("inf"))


def test_envelope_ramps_to_one_in_the_given_cycles():
    phase = np.linspace(0.0, 6 * math.pi, 2001)
    envelope = amplitude_envelope(phase, 1.0)
    assert envelope[0] == 0.0
    assert np.all(np.diff(envelope) >= 0)
    np.testing.assert_array_equal(envelope[phase >= 2 * math.pi], 1.0)
    assert amplitude_envelope(math.pi, 1.0) == pytest.approx(math.sin(math.pi / 4))
    np.testing.assert_array_equal(amplitude_envelope(phase, 0.0), 1.0)


@pytest.mark.parametrize("cycles", [0.25, 1.0, 3.0])
def test_ramped_wave_moves_at_most_amplitude_per_radian(cycles):
    phase = np.linspace(0.0, 4 * math.pi * cycles, 4001)
    step = phase[1] - phase[0]
    for shift in (0.0, 1.0, 2.5):
        wave = amplitude_envelope(phase, cycles) * 0.6 * np.sin(phase - shift)
        assert np.abs(np.diff(wave)).max() <= 0.6 * step * (1 + 1e-9)


def test_steering_bias():
    params = GaitParams(heading_gain=0.5, max_bias=0.2, bias_rate=1.0)
    dt = 1.0 / 30.0
    # a goal counter-clockwise of the course needs a positive bias
    assert steering_bias(0.1, 0.0, params, 1.0) == pytest.approx(0.05)
    assert steering_bias(-0.1, 0.0, params, 1.0) == pytest.approx(-0.05)
    assert steering_bias(3.0, 0.0, params, 1.0) == pytest.approx(0.2)
    assert steering_bias(0.1, 0.0, params, dt) == pytest.approx(dt)
    assert steering_bias(-3.0, 0.2, params, dt) == pytest.approx(0.2 - dt)
    assert steering_bias(1.0, 0.0, GaitParams(heading_gain=0.0), 1.0) == 0.0
