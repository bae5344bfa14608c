"""Feedback laws, activation policies, and concatenated sources."""

import numpy as np
import pytest

from etapairing.control import (
    ControlSpec,
    DerivativeThreshold,
    FixedTime,
    PostDelayPositiveIntegral,
    StaleBoundError,
    WindowedAverage,
    activation_check,
    asymptotic_phi,
    asymptotic_phi_value,
    concatenated_source,
    lyapunov_phi,
    lyapunov_phi_value,
    suppress_phi,
    suppress_phi_value,
)
from etapairing.evolution import History, PropagatorConfig, evolve
from etapairing.operators import max_abs_eigenvalue
from etapairing.pulses import PulseSpec, PumpSource


# --- law values ----------------------------------------------------------------


def test_law_zero_drift_means_zero_field():
    assert lyapunov_phi_value(0.0, 5.0) == 0.0
    assert suppress_phi_value(0.0, 5.0) == 0.0
    assert asymptotic_phi_value(0.0, 3.0, 5.0, 20.0, 20.0) == 0.0


def test_law_saturation():
    assert lyapunov_phi_value(5.0, 5.0) == pytest.approx(np.pi / 2)
    assert lyapunov_phi_value(-5.0, 5.0) == pytest.approx(-np.pi / 2)


def test_sign_duality_exact():
    rng = np.random.default_rng(1)
    for q in rng.uniform(-5, 5, 25):
        assert suppress_phi_value(q, 5.0) == -lyapunov_phi_value(q, 5.0)


def test_asymptotic_at_target_is_zero():
    assert asymptotic_phi_value(3.7, 12.0, 5.0, 20.0, 12.0) == 0.0


def test_clamp_tolerates_roundoff_overshoot():
    val = lyapunov_phi_value(5.0 * (1 + 1e-13), 5.0)
    assert val == pytest.approx(np.pi / 2)


def test_stale_bound_detected():
    with pytest.raises(StaleBoundError, match="stale"):
        lyapunov_phi_value(5.0 * (1 + 1e-6), 5.0)


def test_laws_on_ground_state(sys8, ground8, bounds8):
    _, psi = ground8
    assert abs(lyapunov_phi(psi, sys8.drift, bounds8.q_max)) < 1e-9
    assert abs(suppress_phi(psi, sys8.drift, bounds8.q_max)) < 1e-9
    assert abs(
        asymptotic_phi(psi, sys8.drift, sys8.eta.sq, bounds8.q_max, bounds8.eta_sq_max, 20.0)
    ) < 1e-9


def test_control_spec_validation():
    with pytest.raises(ValueError, match="unknown control mode"):
        ControlSpec(mode="bang_bang", q_max=5.0, eta_sq_max=20.0)
    with pytest.raises(ValueError, match="positive"):
        ControlSpec(mode="lyapunov_up", q_max=0.0, eta_sq_max=20.0)
    with pytest.raises(ValueError, match="target"):
        ControlSpec(mode="asymptotic", q_max=5.0, eta_sq_max=20.0, eta0_sq=25.0)
    with pytest.raises(ValueError, match="target"):
        ControlSpec(mode="asymptotic", q_max=5.0, eta_sq_max=20.0)


# --- activation policies ---------------------------------------------------------


def _history(ts, phis, qs, dt, t_h=1.0) -> History:
    h = History(len(ts) + 1, dt, t_h)
    for t, phi, q in zip(ts, phis, qs):
        h.record_observables(t, 0.0, q, 1.0)
        h.record_field(phi, False)
    h.record_observables(ts[-1] + dt, 0.0, qs[-1], 1.0)
    return h


def test_zero_field_history_never_fires():
    dt = 0.01
    ts = np.arange(300) * dt
    h = _history(ts, np.zeros(300), np.ones(300), dt)
    assert not WindowedAverage(period=0.5).fires(h)
    assert activation_check(h, WindowedAverage(period=0.5)) is None


def test_windowed_average_fires_on_negative_drift():
    dt = 0.01
    ts = np.arange(300) * dt
    phis = np.full(300, 0.3)
    qs = np.full(300, -1.0)  # sin(phi) q < 0 throughout
    h = _history(ts, phis, qs, dt)
    policy = WindowedAverage(period=0.5)
    assert policy.fires(h)
    assert activation_check(h, policy) == pytest.approx(h.last_t)


def test_windowed_average_needs_full_period():
    dt = 0.01
    ts = np.arange(10) * dt
    h = _history(ts, np.full(10, 0.3), np.full(10, -1.0), dt)
    assert not WindowedAverage(period=0.5).fires(h)


def test_derivative_threshold():
    dt = 0.01
    ts = np.arange(5) * dt
    h = _history(ts, np.full(5, 0.3), np.full(5, -0.1), dt)
    assert DerivativeThreshold(threshold=-1e-3).fires(h)
    h2 = _history(ts, np.full(5, 1e-4), np.full(5, -0.1), dt)
    assert not DerivativeThreshold(threshold=-1e-3).fires(h2)


def test_fixed_time_policy():
    dt = 0.01
    ts = np.arange(5) * dt
    h = _history(ts, np.zeros(5), np.zeros(5), dt)
    assert FixedTime(t_act=0.03).fires(h)
    assert not FixedTime(t_act=1.0).fires(h)
    assert not FixedTime(t_act=float("inf")).fires(h)


def test_post_delay_positive_integral():
    dt = 0.01
    ts = np.arange(300) * dt
    phis = np.full(300, 0.3)
    qs = np.full(300, +1.0)
    h = _history(ts, phis, qs, dt)
    assert PostDelayPositiveIntegral(delay=1.0, period=0.5).fires(h)
    assert not PostDelayPositiveIntegral(delay=10.0, period=0.5).fires(h)


# --- concatenated sources --------------------------------------------------------


def _l4_setup(sys4):
    spec = PulseSpec(phi0=0.3, omega_p=9.0, n_p=5, t_l=1.0, t_r=1.0)
    q_max = max_abs_eigenvalue(sys4.drift)
    eta_max = max_abs_eigenvalue(sys4.eta.sq)
    return spec, q_max, eta_max


def test_never_activating_control_equals_pump(sys4, ground4):
    _, psi = ground4
    spec, q_max, eta_max = _l4_setup(sys4)
    cfg = PropagatorConfig()
    plain = evolve(psi, PumpSource(spec), 0.0, spec.t_f, sys4.family, cfg)
    control = ControlSpec(
        mode="lyapunov_up", q_max=q_max, eta_sq_max=eta_max,
        policy=FixedTime(float("inf")),
    )
    gated = evolve(
        psi, concatenated_source(PumpSource(spec), control), 0.0, spec.t_f, sys4.family, cfg
    )
    assert np.array_equal(plain.phi, gated.phi)
    assert np.array_equal(plain.final_state.amplitudes, gated.final_state.amplitudes)
    assert gated.t_act is None
    assert not gated.control_active.any()


def test_activation_latches_and_is_recorded(sys4, ground4):
    _, psi = ground4
    spec, q_max, eta_max = _l4_setup(sys4)
    t_act = spec.t_l + 2 * spec.t_p
    control = ControlSpec(
        mode="lyapunov_up", q_max=q_max, eta_sq_max=eta_max, policy=FixedTime(t_act)
    )
    traj = evolve(
        psi, concatenated_source(PumpSource(spec), control), 0.0, spec.t_f,
        sys4.family, PropagatorConfig(),
    )
    traj.validate()
    assert traj.t_act == pytest.approx(t_act, abs=traj.metadata["dt"])
    active = traj.control_active
    assert active[-1]
    first = np.argmax(active)
    assert traj.t[first] == pytest.approx(traj.t_act, abs=1e-12)
    assert active[first:].all()


def test_control_outputs_stay_in_principal_branch(sys4, ground4):
    _, psi = ground4
    spec, q_max, eta_max = _l4_setup(sys4)
    control = ControlSpec(
        mode="lyapunov_up", q_max=q_max, eta_sq_max=eta_max,
        policy=FixedTime(spec.t_l + spec.t_p),
    )
    traj = evolve(
        psi, concatenated_source(PumpSource(spec), control), 0.0, spec.t_f,
        sys4.family, PropagatorConfig(),
    )
    controlled = traj.phi[traj.control_active]
    assert np.all(np.abs(controlled) <= np.pi / 2 + 1e-12)
