"""Parameter-grid scans and activation-time sweeps with deterministic output.

Grid cells and sweep points are independent jobs over shared immutable
operators.  Results are gathered into preallocated arrays by index, so the
output is bit-identical regardless of worker count or scheduling.  Within
one cell the open-loop run doubles as the common prefix of the controlled
runs: the controlled evolution resumes from a state snapshot taken when
the activation policy fires, on the same integration grid, which is
numerically identical to running the concatenated field from scratch.
"""

from __future__ import annotations

import json
import multiprocessing as mp
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .basis import SectorBasis
from .control import (
    ActivationPolicy,
    ControlSpec,
    FixedTime,
    PostDelayPositiveIntegral,
    WindowedAverage,
    concatenated_source,
)
from .evolution import ManyBodyState, PropagatorConfig, Trajectory, evolve
from .operators import HamiltonianFamily
from .pulses import DoublePumpSource, PulseSpec, PumpSource


def axis_values(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive uniform axis lo, lo+step, ..., hi (within 1e-9 slack)."""
    if step <= 0 or hi < lo:
        raise ValueError("need step > 0 and hi >= lo")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


@dataclass(frozen=True)
class GridSpec:
    """Axes of an (omega_p, phi0) pump-parameter scan."""

    omegas: tuple[float, ...]
    phi0s: tuple[float, ...]

    @classmethod
    def from_ranges(
        cls,
        omega_min: float,
        omega_max: float,
        omega_step: float,
        phi0_min: float,
        phi0_max: float,
        phi0_step: float,
    ) -> "GridSpec":
        return cls(
            omegas=tuple(float(w) for w in axis_values(omega_min, omega_max, omega_step)),
            phi0s=tuple(float(p) for p in axis_values(phi0_min, phi0_max, phi0_step)),
        )

    @property
    def n_cells(self) -> int:
        return len(self.omegas) * len(self.phi0s)


@dataclass
class ScanGrid:
    """Per-cell results of one grid scan (arrays indexed [omega, phi0])."""

    omegas: np.ndarray
    phi0s: np.ndarray
    max_eta_sq: np.ndarray
    final_eta_sq: np.ndarray
    controlled_final: dict[str, np.ndarray]
    t_act: np.ndarray
    metadata: dict
    cell_errors: list = field(default_factory=list)

    def to_csv(self, path: str | Path) -> Path:
        """Row-major (omega outer, phi0 inner) CSV of all per-cell values.

        The primary controlled column holds the first requested control
        mode; further modes get suffixed columns.
        """
        path = Path(path)
        L = self.metadata["L"]
        modes = list(self.controlled_final)
        cols = "omega_p,phi0,max_eta2_per_L,final_eta2_per_L,controlled_final_eta2_per_L,t_act"
        for extra in modes[1:]:
            cols += f",controlled_final_eta2_per_L_{extra}"
        with open(path, "w") as f:
            f.write(cols + "\n")
            for i, w in enumerate(self.omegas):
                for j, p in enumerate(self.phi0s):
                    primary = (
                        float(self.controlled_final[modes[0]][i, j]) / L
                        if modes
                        else float("nan")
                    )
                    row = (
                        f"{float(w)!r},{float(p)!r},{float(self.max_eta_sq[i, j]) / L!r},"
                        f"{float(self.final_eta_sq[i, j]) / L!r},{primary!r},"
                        f"{float(self.t_act[i, j])!r}"
                    )
                    for extra in modes[1:]:
                        row += f",{float(self.controlled_final[extra][i, j]) / L!r}"
                    f.write(row + "\n")
        return path


@dataclass
class SweepCurve:
    """Final pair correlator versus activation time for one pump."""

    t_act_requested: np.ndarray
    t_act_realized: np.ndarray
    final_eta_sq: np.ndarray
    direction: str
    reference_uncontrolled: float
    reference_policy_final: float | None
    reference_policy_t_act: float | None
    metadata: dict

    def optimum(self) -> tuple[float, float]:
        """(t_act, final) at the sweep optimum for its direction."""
        k = int(np.argmax(self.final_eta_sq)) if self.direction == "max" else int(
            np.argmin(self.final_eta_sq)
        )
        return float(self.t_act_realized[k]), float(self.final_eta_sq[k])

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        L = self.metadata["L"]
        with open(path, "w") as f:
            f.write("t_act,final_eta2_per_L\n")
            for ta, v in zip(self.t_act_realized, self.final_eta_sq):
                f.write(f"{float(ta)!r},{float(v) / L!r}\n")
        return path


# --- shared per-process context ----------------------------------------------

_CTX: dict = {}


def _set_context(
    family: HamiltonianFamily,
    basis: SectorBasis,
    initial: ManyBodyState,
    config: PropagatorConfig,
    pump_template: PulseSpec,
    modes: tuple[str, ...],
    q_max: float,
    eta_sq_max: float,
    eta0_sq: float | None,
) -> None:
    _CTX.update(
        family=family,
        basis=basis,
        initial=initial,
        config=config,
        template=pump_template,
        modes=modes,
        q_max=q_max,
        eta_sq_max=eta_sq_max,
        eta0_sq=eta0_sq,
    )


def _control_spec(mode: str, policy: ActivationPolicy) -> ControlSpec:
    return ControlSpec(
        mode=mode,
        q_max=_CTX["q_max"],
        eta_sq_max=_CTX["eta_sq_max"],
        eta0_sq=_CTX["eta0_sq"] if mode == "asymptotic" else None,
        policy=policy,
    )


def resume_controlled(
    snapshot: ManyBodyState,
    mode: str,
    pump_source,
    t1: float,
    dt: float,
) -> Trajectory:
    """Continue an open-loop prefix under a control law (same grid)."""
    spec = _control_spec(mode, FixedTime(snapshot.t))
    source = concatenated_source(pump_source, spec)
    return evolve(
        snapshot,
        source,
        snapshot.t,
        t1,
        _CTX["family"],
        _CTX["config"],
        dt_override=dt,
    )


def _run_cell(args: tuple[int, int]) -> tuple[int, int, dict]:
    i, j = args
    template: PulseSpec = _CTX["template"]
    spec = replace(template, omega_p=_CTX["grid"].omegas[i], phi0=_CTX["grid"].phi0s[j])
    pump = PumpSource(spec)
    policy = WindowedAverage(period=spec.t_p)
    try:
        traj = evolve(
            _CTX["initial"],
            pump,
            0.0,
            spec.t_f,
            _CTX["family"],
            _CTX["config"],
            snapshot_policy=policy,
        )
        out = {
            "max": float(traj.eta_sq.max()),
            "final": float(traj.eta_sq[-1]),
            "t_act": float("nan"),
        }
        for mode in _CTX["modes"]:
            out[mode] = out["final"]
        snap = traj.snapshot_state
        if snap is not None and snap.t < spec.t_f - 0.5 * traj.metadata["dt"]:
            out["t_act"] = snap.t
            for mode in _CTX["modes"]:
                ctraj = resume_controlled(
                    snap, mode, PumpSource(spec), spec.t_f, traj.metadata["dt"]
                )
                out[mode] = float(ctraj.eta_sq[-1])
        return i, j, out
    except Exception as exc:  # per-cell resilience
        return i, j, {"error": f"{type(exc).__name__}: {exc}"}


def run_grid(
    pump_template: PulseSpec,
    grid: GridSpec,
    family: HamiltonianFamily,
    basis: SectorBasis,
    initial: ManyBodyState,
    config: PropagatorConfig,
    q_max: float,
    eta_sq_max: float,
    modes: Sequence[str] = (),
    eta0_sq: float | None = None,
    workers: int = 1,
) -> ScanGrid:
    """One (pump + optional controlled continuation) evolution per grid cell.

    Controlled cells use the period-averaged drift-sign activation policy;
    a cell where it never fires keeps its uncontrolled final value.
    """
    modes = tuple(modes)
    _set_context(family, basis, initial, config, pump_template, modes, q_max, eta_sq_max, eta0_sq)
    _CTX["grid"] = grid

    n_w, n_p = len(grid.omegas), len(grid.phi0s)
    max_v = np.full((n_w, n_p), np.nan)
    fin_v = np.full((n_w, n_p), np.nan)
    tact_v = np.full((n_w, n_p), np.nan)
    controlled = {m: np.full((n_w, n_p), np.nan) for m in modes}
    errors: list = []

    jobs = [(i, j) for i in range(n_w) for j in range(n_p)]
    if workers > 1:
        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.imap_unordered(_run_cell, jobs, chunksize=1)
            results = list(results)
    else:
        results = [_run_cell(job) for job in jobs]

    for i, j, out in results:
        if "error" in out:
            errors.append({"omega_p": grid.omegas[i], "phi0": grid.phi0s[j], **out})
            continue
        max_v[i, j] = out["max"]
        fin_v[i, j] = out["final"]
        tact_v[i, j] = out["t_act"]
        for m in modes:
            controlled[m][i, j] = out[m]

    metadata = {
        "L": basis.L,
        "n_up": basis.n_up,
        "n_down": basis.n_down,
        "t_h": family.t_h,
        "U": family.u_int,
        "pump_template": pump_template.describe(),
        "modes": list(modes),
        "eta0_sq": eta0_sq,
        "q_max": q_max,
        "eta_sq_max": eta_sq_max,
        "activation": "windowed_average",
        "n_cells": grid.n_cells,
        "n_errors": len(errors),
    }
    return ScanGrid(
        omegas=np.array(grid.omegas),
        phi0s=np.array(grid.phi0s),
        max_eta_sq=max_v,
        final_eta_sq=fin_v,
        controlled_final=controlled,
        t_act=tact_v,
        metadata=metadata,
        cell_errors=errors,
    )


def _run_sweep_point(args: tuple[int, float, np.ndarray, float, float]) -> tuple[int, float, float]:
    k, snap_t, snap_amps, t1, dt = args
    spec: PulseSpec = _CTX["template"]
    pump = DoublePumpSource(spec) if _CTX["double"] else PumpSource(spec)
    snap = ManyBodyState(snap_amps, snap_t)
    traj = resume_controlled(snap, _CTX["modes"][0], pump, t1, dt)
    return k, snap_t, float(traj.eta_sq[-1])


def activation_sweep(
    pump_spec: PulseSpec,
    mode: str,
    t_act_values: Sequence[float],
    family: HamiltonianFamily,
    basis: SectorBasis,
    initial: ManyBodyState,
    config: PropagatorConfig,
    q_max: float,
    eta_sq_max: float,
    direction: str = "max",
    double_pulse: bool = False,
    eta0_sq: float | None = None,
    horizon: float | None = None,
    workers: int = 1,
) -> SweepCurve:
    """Final pair correlator versus fixed activation time for one pump.

    The open-loop run is integrated once with state snapshots at every
    requested activation time plus the default drift-sign policy; each
    sweep point continues from its snapshot on the same grid, so results
    match from-scratch concatenated evolutions exactly.
    """
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    _set_context(
        family, basis, initial, config, pump_spec, (mode,), q_max, eta_sq_max, eta0_sq
    )
    _CTX["double"] = double_pulse

    pump = DoublePumpSource(pump_spec) if double_pulse else PumpSource(pump_spec)
    t1 = horizon if horizon is not None else (
        pump_spec.repeat_offset + pump_spec.t_f if double_pulse else pump_spec.t_f
    )
    default_policy: ActivationPolicy
    if mode == "lyapunov_down":
        default_policy = PostDelayPositiveIntegral(
            delay=pump_spec.repeat_offset, period=pump_spec.t_p
        )
    else:
        default_policy = WindowedAverage(period=pump_spec.t_p)

    # Activation times at or beyond the horizon degrade gracefully: the
    # control never acts before the measurement, so the point records the
    # uncontrolled final value.
    t_act_values = sorted(float(v) for v in t_act_values)
    base = evolve(
        initial,
        pump,
        0.0,
        t1,
        family,
        config,
        snapshot_policy=default_policy,
        snapshot_times=t_act_values,
    )
    dt = base.metadata["dt"]

    reference_policy_final = None
    reference_policy_t_act = None
    if base.snapshot_state is not None and base.snapshot_state.t < t1 - 0.5 * dt:
        ptraj = resume_controlled(
            base.snapshot_state, mode,
            DoublePumpSource(pump_spec) if double_pulse else PumpSource(pump_spec),
            t1, dt,
        )
        reference_policy_final = float(ptraj.eta_sq[-1])
        reference_policy_t_act = base.snapshot_state.t

    jobs = []
    realized = np.empty(len(t_act_values))
    finals = np.empty(len(t_act_values))
    for k, req in enumerate(t_act_values):
        snap = base.snapshots.get(req)
        if snap is None or snap.t >= t1 - 0.5 * dt:
            # Control never acts before measurement: uncontrolled value.
            realized[k] = t1 if snap is None else snap.t
            finals[k] = float(base.eta_sq[-1])
        else:
            jobs.append((k, snap.t, snap.amplitudes, t1, dt))

    if workers > 1 and jobs:
        with mp.get_context("fork").Pool(workers) as pool:
            results = list(pool.imap_unordered(_run_sweep_point, jobs, chunksize=1))
    else:
        results = [_run_sweep_point(j) for j in jobs]
    for k, snap_t, val in results:
        realized[k] = snap_t
        finals[k] = val

    metadata = {
        "L": basis.L,
        "t_h": family.t_h,
        "U": family.u_int,
        "pump": pump_spec.describe(),
        "double_pulse": double_pulse,
        "mode": mode,
        "eta0_sq": eta0_sq,
        "horizon": t1,
        "direction": direction,
        "reference_uncontrolled_per_L": float(base.eta_sq[-1]) / basis.L,
        "reference_policy_final_per_L": (
            None if reference_policy_final is None else reference_policy_final / basis.L
        ),
        "reference_policy_t_act": reference_policy_t_act,
    }
    return SweepCurve(
        t_act_requested=np.array(t_act_values),
        t_act_realized=realized,
        final_eta_sq=finals,
        direction=direction,
        reference_uncontrolled=float(base.eta_sq[-1]),
        reference_policy_final=reference_policy_final,
        reference_policy_t_act=reference_policy_t_act,
        metadata=metadata,
    )
