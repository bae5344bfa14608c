"""Closed-loop field laws and the policies that hand the pump over to them.

All laws are time-local: the field value is an arcsin of normalized
expectation values measured on the instantaneous state, which fixes the
sign of the drift of the pair correlator (upward, downward, or toward a
target value).  Activation policies watch the open-loop history and latch
exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .evolution import FieldSource, History, ManyBodyState
from .operators import SparseOperator, expectation

# Ratios within STALE_TOL above 1 are floating-point overshoot and are
# clipped; anything larger means the cached extreme eigenvalue is wrong
# for this operator.
STALE_TOL = 1e-9


class StaleBoundError(ValueError):
    """An expectation value exceeded its cached extreme eigenvalue."""


def _clamped_ratio(value: float, bound: float) -> float:
    if bound <= 0:
        raise ValueError("extreme eigenvalue bound must be positive")
    r = value / bound
    if abs(r) > 1.0 + STALE_TOL:
        raise StaleBoundError(
            f"|expectation| = {abs(value):.12g} exceeds cached bound {bound:.12g}; "
            "the cache is stale or belongs to a different sector"
        )
    return float(np.clip(r, -1.0, 1.0))


def lyapunov_phi_value(q_value: float, q_max: float) -> float:
    """Feedback phase that makes the pair correlator non-decreasing."""
    return float(np.arcsin(_clamped_ratio(q_value, q_max)))


def suppress_phi_value(q_value: float, q_max: float) -> float:
    """Sign-flipped law: the pair correlator becomes non-increasing."""
    return -lyapunov_phi_value(q_value, q_max)


def asymptotic_phi_value(
    q_value: float, eta_sq_value: float, q_max: float, eta_sq_max: float, eta0_sq: float
) -> float:
    """Law driving (eta^2 - target)^2 monotonically downward."""
    arg = _clamped_ratio(q_value * (eta_sq_value - eta0_sq), q_max * eta_sq_max)
    return float(-np.arcsin(arg))


def lyapunov_phi(state: ManyBodyState, q_op: SparseOperator, q_max: float) -> float:
    """Enhancing feedback phase evaluated on a state."""
    return lyapunov_phi_value(expectation(q_op, state).real, q_max)


def suppress_phi(state: ManyBodyState, q_op: SparseOperator, q_max: float) -> float:
    """Suppressing feedback phase evaluated on a state."""
    return suppress_phi_value(expectation(q_op, state).real, q_max)


def asymptotic_phi(
    state: ManyBodyState,
    q_op: SparseOperator,
    eta_sq_op: SparseOperator,
    q_max: float,
    eta_sq_max: float,
    eta0_sq: float,
) -> float:
    """Target-seeking feedback phase evaluated on a state."""
    return asymptotic_phi_value(
        expectation(q_op, state).real,
        expectation(eta_sq_op, state).real,
        q_max,
        eta_sq_max,
        eta0_sq,
    )


# --- activation policies -----------------------------------------------------

# Windowed integrals this close to zero are floating-point noise, not a
# physical sign change; the sign tests must not fire on them.
NOISE_FLOOR = 1e-14


@dataclass(frozen=True)
class WindowedAverage:
    """Fire when the period-averaged drift of the pair correlator turns negative."""

    period: float

    def fires(self, history: History) -> bool:
        integral = history.trailing_integral(self.period)
        return integral is not None and history.t_h * integral < -NOISE_FLOOR


@dataclass(frozen=True)
class DerivativeThreshold:
    """Fire when the instantaneous drift drops below a fixed threshold."""

    threshold: float = -1e-3

    def fires(self, history: History) -> bool:
        g = history.last_integrand()
        return g is not None and history.t_h * g < self.threshold


@dataclass(frozen=True)
class FixedTime:
    """Fire at the first grid time at or past ``t_act`` (inf = never)."""

    t_act: float

    def fires(self, history: History) -> bool:
        return history.last_t >= self.t_act - 1e-12


@dataclass(frozen=True)
class PostDelayPositiveIntegral:
    """Fire at the first time past ``delay`` with positive period-averaged drift."""

    delay: float
    period: float

    def fires(self, history: History) -> bool:
        if history.last_t < self.delay:
            return False
        integral = history.trailing_integral(self.period)
        return integral is not None and history.t_h * integral > NOISE_FLOOR


ActivationPolicy = WindowedAverage | DerivativeThreshold | FixedTime | PostDelayPositiveIntegral


def activation_check(history: History, policy: ActivationPolicy) -> float | None:
    """Evaluate a policy on the recorded history.

    Returns the activation time (the latest history time) when the policy
    fires, otherwise None.
    """
    return float(history.last_t) if policy.fires(history) else None


# --- control specification and concatenated sources --------------------------

CONTROL_MODES = ("lyapunov_up", "lyapunov_down", "asymptotic")


@dataclass(frozen=True)
class ControlSpec:
    """Which law to run, its normalization bounds, and when to activate it.

    ``q_max`` and ``eta_sq_max`` are the largest |eigenvalue| of the drift
    generator and of the pair correlator on the working sector.
    """

    mode: str
    q_max: float
    eta_sq_max: float
    eta0_sq: float | None = None
    policy: ActivationPolicy = FixedTime(float("inf"))

    def __post_init__(self) -> None:
        if self.mode not in CONTROL_MODES:
            raise ValueError(f"unknown control mode {self.mode!r}; expected {CONTROL_MODES}")
        if self.q_max <= 0 or self.eta_sq_max <= 0:
            raise ValueError("extreme eigenvalue bounds must be positive")
        if self.mode == "asymptotic":
            if self.eta0_sq is None or not 0 <= self.eta0_sq <= self.eta_sq_max:
                raise ValueError(
                    "asymptotic mode needs a target in [0, eta_sq_max], "
                    f"got {self.eta0_sq}"
                )

    def law(self) -> Callable[[History], float]:
        if self.mode == "lyapunov_up":
            return lambda h: lyapunov_phi_value(h.last_q, self.q_max)
        if self.mode == "lyapunov_down":
            return lambda h: suppress_phi_value(h.last_q, self.q_max)
        return lambda h: asymptotic_phi_value(
            h.last_q, h.last_eta_sq, self.q_max, self.eta_sq_max, self.eta0_sq
        )

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "q_max": self.q_max,
            "eta_sq_max": self.eta_sq_max,
            "eta0_sq": self.eta0_sq,
            "policy": type(self.policy).__name__,
            "policy_params": {
                k: (None if v == float("inf") else v)
                for k, v in vars(self.policy).items()
            },
        }


class ControlledSource(FieldSource):
    """Pump until the activation policy fires, feedback law afterwards.

    Activation latches: once fired the law stays in charge.  The feedback
    value is computed from the state at the step start and held over the
    step; the pump segment keeps the open-loop midpoint sampling so an
    uncontrolled run is bit-identical up to the activation time.
    """

    open_loop = False

    def __init__(self, pump: FieldSource, spec: ControlSpec):
        self.pump = pump
        self.spec = spec
        self._law = spec.law()
        self.carrier_period = pump.carrier_period
        self.activated = False
        self.t_act: float | None = None

    def value(self, t, t_mid, amps, history):
        if not self.activated and self.spec.policy.fires(history):
            self.activated = True
            self.t_act = float(t)
        if self.activated:
            return self._law(history)
        return self.pump.value(t, t_mid, amps, history)

    def law_value(self, q: float, eta_sq: float) -> float:
        """Feedback value for given observable values (midpoint refinement)."""
        if self.spec.mode == "lyapunov_up":
            return lyapunov_phi_value(q, self.spec.q_max)
        if self.spec.mode == "lyapunov_down":
            return suppress_phi_value(q, self.spec.q_max)
        return asymptotic_phi_value(
            q, eta_sq, self.spec.q_max, self.spec.eta_sq_max, self.spec.eta0_sq
        )

    def describe(self) -> dict:
        return {
            "type": "controlled",
            "pump": self.pump.describe(),
            "control": self.spec.describe(),
        }


def concatenated_source(pump: FieldSource, spec: ControlSpec) -> ControlledSource:
    """Field that applies the pump first and the feedback law after activation."""
    return ControlledSource(pump, spec)
