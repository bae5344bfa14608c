"""Open-loop field shapes and envelope filters.

The pump is a sine carrier under a single sin^2 envelope arc spanning
exactly ``n_p`` carrier cycles, padded by idle times before and after.
Filters (activation smoothing, switch-off ramp) act on realized field
sample streams, which can then be replayed as open-loop sources.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evolution import FieldSource


@dataclass(frozen=True)
class PulseSpec:
    """Pump parameters: peak phase, carrier frequency, cycle count, idle times."""

    phi0: float
    omega_p: float
    n_p: int
    t_l: float = 5.0
    t_r: float = 5.0

    def __post_init__(self) -> None:
        if self.omega_p <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.n_p < 1 or int(self.n_p) != self.n_p:
            raise ValueError("cycle count must be a positive integer")

    @property
    def t_p(self) -> float:
        """Carrier period."""
        return 2.0 * np.pi / self.omega_p

    @property
    def duration(self) -> float:
        """Width of the pulse support."""
        return self.n_p * self.t_p

    @property
    def t_f(self) -> float:
        """End of the measurement window: idle + pulse + idle."""
        return self.t_l + self.duration + self.t_r

    @property
    def repeat_offset(self) -> float:
        """Start-to-start offset when the same pulse is applied twice."""
        return self.t_l + self.t_r + self.duration

    def describe(self) -> dict:
        return {
            "phi0": self.phi0,
            "omega_p": self.omega_p,
            "n_p": self.n_p,
            "t_l": self.t_l,
            "t_r": self.t_r,
        }


def pump_phi(spec: PulseSpec, t: float) -> float:
    """Pump field at time t: carrier x sin^2 envelope inside the support."""
    tau = t - spec.t_l
    if tau < 0.0 or tau > spec.duration:
        return 0.0
    w = spec.omega_p
    return float(spec.phi0 * np.sin(w * tau) * np.sin(w * tau / (2 * spec.n_p)) ** 2)


def double_pulse_phi(spec: PulseSpec, t: float) -> float:
    """Two identical pumps, the second offset by the full single-pulse frame."""
    return pump_phi(spec, t) + pump_phi(spec, t - spec.repeat_offset)


class PumpSource(FieldSource):
    """Open-loop source evaluating the pump formula."""

    open_loop = True

    def __init__(self, spec: PulseSpec):
        self.spec = spec
        self.carrier_period = spec.t_p

    def value(self, t, t_mid, amps, history):
        return pump_phi(self.spec, t_mid)

    def describe(self) -> dict:
        return {"type": "pump", **self.spec.describe()}


class DoublePumpSource(FieldSource):
    """Open-loop source applying the same pump twice back to back."""

    open_loop = True

    def __init__(self, spec: PulseSpec):
        self.spec = spec
        self.carrier_period = spec.t_p

    def value(self, t, t_mid, amps, history):
        return double_pulse_phi(self.spec, t_mid)

    def describe(self) -> dict:
        return {"type": "double_pump", **self.spec.describe()}


class ConstantSource(FieldSource):
    """Constant (usually zero) field."""

    open_loop = True

    def __init__(self, value: float = 0.0, carrier_period: float | None = None):
        self._value = value
        self.carrier_period = carrier_period

    def value(self, t, t_mid, amps, history):
        return self._value

    def describe(self) -> dict:
        return {"type": "constant", "value": self._value}


class ReplaySource(FieldSource):
    """Open-loop playback of a recorded field with zero-order hold.

    Sample k holds on [t_k, t_{k+1}); querying at a step midpoint of the
    recording grid therefore reproduces the recorded run exactly.  Queries
    outside the recorded range return 0.
    """

    open_loop = True

    def __init__(self, t: np.ndarray, phi: np.ndarray, carrier_period: float | None = None):
        t = np.asarray(t, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if t.ndim != 1 or t.shape != phi.shape or len(t) < 2:
            raise ValueError("replay needs matching 1-d t/phi arrays of length >= 2")
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
            raise ValueError("replay requires a uniform sample grid")
        self.t = t
        self.phi_samples = phi
        self.dt = float(dt[0])
        self.carrier_period = carrier_period

    def value(self, t, t_mid, amps, history):
        k = int(np.floor((t_mid - self.t[0]) / self.dt))
        if k < 0 or k >= len(self.phi_samples):
            return 0.0
        return float(self.phi_samples[k])

    def describe(self) -> dict:
        return {
            "type": "replay",
            "t0": float(self.t[0]),
            "t1": float(self.t[-1]),
            "dt": self.dt,
        }


# --- filters on realized field sample streams -------------------------------


def gaussian_smooth(
    t: np.ndarray,
    phi: np.ndarray,
    sigma: float,
    window: tuple[float, float],
) -> np.ndarray:
    """Smooth the samples inside ``window`` with a truncated Gaussian kernel.

    The kernel is renormalized after truncation (to the window and to
    +-4 sigma), so constants pass through unchanged; a linear blend to the
    raw samples at the window edges keeps the output continuous there.
    Samples outside the window are returned untouched.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    t_a, t_b = window
    if t_a >= t_b:
        raise ValueError("window must satisfy t_a < t_b")
    if t_a < t[0] - 1e-12 or t_b > t[-1] + 1e-12:
        raise ValueError("smoothing window exceeds the sample range")
    inside = np.where((t >= t_a) & (t <= t_b))[0]
    if len(inside) == 0:
        return phi.copy()
    # Kernel support restricted to the window itself.
    sup_lo, sup_hi = inside[0], inside[-1] + 1
    out = phi.copy()
    half = 0.5 * (t_b - t_a)
    center = 0.5 * (t_a + t_b)
    for k in inside:
        w = np.exp(-0.5 * ((t[sup_lo:sup_hi] - t[k]) / sigma) ** 2)
        total = w.sum()
        smoothed = float(np.dot(w, phi[sup_lo:sup_hi]) / total)
        blend = max(0.0, 1.0 - abs(t[k] - center) / half)
        out[k] = blend * smoothed + (1.0 - blend) * phi[k]
    return out


def switch_off(
    t: np.ndarray,
    phi: np.ndarray,
    t1: float,
    t2: float,
) -> np.ndarray:
    """Multiply samples by a cos^2 ramp: 1 before t1, 0 from t2 on."""
    if t2 <= t1:
        raise ValueError("switch-off interval requires t2 > t1")
    t = np.asarray(t, dtype=float)
    out = np.asarray(phi, dtype=float).copy()
    ramp = (t >= t1) & (t < t2)
    out[ramp] *= np.cos(0.5 * np.pi * (t[ramp] - t1) / (t2 - t1)) ** 2
    out[t >= t2] = 0.0
    return out


def save_field_csv(path: str | Path, t: np.ndarray, phi: np.ndarray, metadata: dict | None = None) -> Path:
    """Write a (t, phi) table; loadable as an open-loop replay source."""
    path = Path(path)
    with open(path, "w") as f:
        f.write("t,phi\n")
        for a, b in zip(t, phi):
            f.write(f"{float(a)!r},{float(b)!r}\n")
    if metadata is not None:
        with open(path.with_suffix(".meta.json"), "w") as f:
            json.dump(metadata, f, indent=1, sort_keys=True, default=float)
    return path


def load_field_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a (t, phi) table written by :func:`save_field_csv` or a trajectory."""
    rows = np.genfromtxt(path, delimiter=",", names=True)
    if "phi" not in rows.dtype.names or "t" not in rows.dtype.names:
        raise ValueError(f"{path} has no (t, phi) columns")
    return np.atleast_1d(rows["t"]).astype(float), np.atleast_1d(rows["phi"]).astype(float)
