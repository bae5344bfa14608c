"""Pump shape, double pulse, smoothing and switch-off filters, replay."""

import numpy as np
import pytest

from etapairing.pulses import (
    PulseSpec,
    ReplaySource,
    double_pulse_phi,
    gaussian_smooth,
    load_field_csv,
    pump_phi,
    save_field_csv,
    switch_off,
)

SPEC = PulseSpec(phi0=0.2, omega_p=19.1, n_p=54, t_l=5.0, t_r=5.0)


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(phi0=0.1, omega_p=-1.0, n_p=3)
    with pytest.raises(ValueError):
        PulseSpec(phi0=0.1, omega_p=5.0, n_p=0)


def test_frame_times():
    assert SPEC.t_p == pytest.approx(2 * np.pi / 19.1)
    assert SPEC.t_f == pytest.approx(10.0 + 54 * SPEC.t_p)
    assert SPEC.repeat_offset == pytest.approx(SPEC.t_f)


def test_zero_outside_support():
    assert pump_phi(SPEC, 4.999) == 0.0
    assert pump_phi(SPEC, 0.0) == 0.0
    assert pump_phi(SPEC, SPEC.t_l + SPEC.duration + 1e-9) == 0.0


def test_carrier_zero_at_envelope_peak():
    # Midway through the support the envelope is 1 but the carrier vanishes.
    t = SPEC.t_l + 0.5 * SPEC.n_p * SPEC.t_p
    assert abs(pump_phi(SPEC, t)) < 1e-12


def test_quarter_period_value():
    tau = SPEC.t_p / 4
    expected = 0.2 * np.sin(np.pi / (4 * 54)) ** 2
    assert pump_phi(SPEC, SPEC.t_l + tau) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.2 * np.sin(0.014544) ** 2, rel=1e-3)


def test_envelope_bound():
    t = np.linspace(0.0, SPEC.t_f, 20001)
    vals = np.array([pump_phi(SPEC, x) for x in t])
    assert np.abs(vals).max() <= 0.2 + 1e-12


def test_carrier_oscillation_count():
    spec = PulseSpec(phi0=0.3, omega_p=6.0, n_p=7, t_l=0.0, t_r=0.0)
    # Sample between carrier zeros: sign flips once per half period.
    k = np.arange(2 * spec.n_p)
    t = (k + 0.5) * spec.t_p / 2
    signs = np.sign([pump_phi(spec, x) for x in t])
    flips = int(np.sum(signs[1:] != signs[:-1]))
    assert flips == 2 * spec.n_p - 1


def test_double_pulse_gap_and_shift():
    gap_t = SPEC.t_l + SPEC.duration + 2.0  # inside the idle gap
    assert double_pulse_phi(SPEC, gap_t) == 0.0
    # (t + offset) - offset costs a few ulps of time, amplified by dphi/dt.
    for t in np.linspace(SPEC.t_l, SPEC.t_l + SPEC.duration, 97):
        assert double_pulse_phi(SPEC, t + SPEC.repeat_offset) == pytest.approx(
            pump_phi(SPEC, t), abs=1e-12
        )


def test_gaussian_smooth_preserves_constants():
    t = np.linspace(0.0, 10.0, 501)
    phi = np.full_like(t, 0.37)
    out = gaussian_smooth(t, phi, sigma=0.3, window=(2.0, 5.0))
    assert np.allclose(out, phi, atol=1e-12)


def test_gaussian_smooth_tiny_sigma_is_identity():
    t = np.linspace(0.0, 10.0, 501)
    rng = np.random.default_rng(0)
    phi = rng.standard_normal(t.size)
    out = gaussian_smooth(t, phi, sigma=1e-4, window=(2.0, 5.0))
    assert np.allclose(out, phi, atol=1e-12)


def test_gaussian_smooth_untouched_outside_window():
    t = np.linspace(0.0, 10.0, 501)
    phi = np.sin(3 * t)
    out = gaussian_smooth(t, phi, sigma=0.5, window=(4.0, 6.0))
    outside = (t < 4.0) | (t > 6.0)
    assert np.array_equal(out[outside], phi[outside])
    inside = (t > 4.4) & (t < 5.6)
    assert not np.allclose(out[inside], phi[inside])


def test_gaussian_smooth_continuous_at_edges():
    t = np.linspace(0.0, 10.0, 2001)
    phi = np.sin(5 * t)
    out = gaussian_smooth(t, phi, sigma=0.4, window=(3.0, 7.0))
    edge = np.searchsorted(t, 3.0)
    assert abs(out[edge] - phi[edge]) < 1e-6  # blend pins the edges
    jumps = np.abs(np.diff(out)).max()
    assert jumps < np.abs(np.diff(phi)).max() * 2


def test_gaussian_smooth_window_validation():
    t = np.linspace(0.0, 1.0, 11)
    phi = np.zeros(11)
    with pytest.raises(ValueError, match="exceeds the sample range"):
        gaussian_smooth(t, phi, 0.1, (0.5, 2.0))
    with pytest.raises(ValueError, match="sigma"):
        gaussian_smooth(t, phi, -0.1, (0.2, 0.8))


def test_switch_off_profile():
    t = np.linspace(0.0, 10.0, 1001)
    phi = np.ones_like(t)
    out = switch_off(t, phi, 4.0, 6.0)
    assert np.array_equal(out[t < 4.0], phi[t < 4.0])
    mid = np.searchsorted(t, 5.0)
    assert out[mid] == pytest.approx(0.5, abs=1e-12)
    assert np.all(out[t >= 6.0] == 0.0)
    with pytest.raises(ValueError):
        switch_off(t, phi, 6.0, 4.0)


def test_replay_zero_order_hold():
    t = np.arange(0.0, 1.0, 0.1)
    phi = np.arange(10.0)
    src = ReplaySource(t, phi)
    assert src.value(0.0, 0.05, None, None) == 0.0
    assert src.value(0.3, 0.35, None, None) == 3.0
    assert src.value(2.0, 2.05, None, None) == 0.0  # beyond the recording
    with pytest.raises(ValueError, match="uniform"):
        ReplaySource(np.array([0.0, 0.1, 0.3]), np.zeros(3))


def test_field_csv_round_trip(tmp_path):
    t = np.linspace(0.0, 1.0, 21)
    phi = np.sin(t)
    path = save_field_csv(tmp_path / "f.csv", t, phi, {"note": 1})
    t2, phi2 = load_field_csv(path)
    assert np.array_equal(t, t2)
    assert np.array_equal(phi, phi2)
    assert (tmp_path / "f.meta.json").exists()
