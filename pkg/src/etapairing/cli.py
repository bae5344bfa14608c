"""Configuration-driven command line front end.

Commands produce figure-ready CSV data plus a JSON manifest (config echo,
cache digests, wall time).  Plotting is left to external tools; the column
contract of every output is documented in the README.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, cache as _cache, config as _config, scan as _scan
from .basis import build_sector_basis
from .config import ConfigError
from .control import ControlSpec, concatenated_source
from .evolution import ManyBodyState, evolve, ground_state
from .operators import (
    build_hamiltonian_family,
    get_drift_generator,
    get_eta_operators,
    max_abs_eigenvalue,
)
from .presets import PRESETS, get_preset
from .pulses import (
    DoublePumpSource,
    PulseSpec,
    PumpSource,
    ReplaySource,
    gaussian_smooth,
    load_field_csv,
    save_field_csv,
    switch_off,
)


@dataclass
class Runtime:
    """Operators and bounds shared by every command for one system block."""

    basis: object
    family: object
    eta: object
    drift: object
    q_max: float
    eta_sq_max: float
    engine: object
    cache_dir: Path


def _runtime(cfg: dict, out_dir: Path) -> Runtime:
    sysc = cfg["system"]
    basis = build_sector_basis(int(sysc["L"]), int(sysc["n_up"]), int(sysc["n_down"]))
    family = build_hamiltonian_family(basis, float(sysc["t_h"]), float(sysc["U"]))
    eta = get_eta_operators(basis)
    drift = get_drift_generator(basis)
    cache_dir = Path(cfg["outputs"]["cache_dir"] or out_dir / "cache")
    cache_dir.mkdir(parents=True, exist_ok=True)
    q_max = max_abs_eigenvalue(drift, cache_dir=cache_dir, label="q_max")
    eta_sq_max = max_abs_eigenvalue(eta.sq, cache_dir=cache_dir, label="eta_sq_max")
    return Runtime(
        basis=basis,
        family=family,
        eta=eta,
        drift=drift,
        q_max=q_max,
        eta_sq_max=eta_sq_max,
        engine=_config.make_engine(cfg),
        cache_dir=cache_dir,
    )


def _control_spec(cfg: dict, rt: Runtime, pulse: PulseSpec) -> ControlSpec | None:
    if "control" not in cfg:
        return None
    c = cfg["control"]
    eta0 = c["eta0_sq"]
    if c["mode"] == "asymptotic" and eta0 is None:
        eta0 = rt.eta_sq_max
    return ControlSpec(
        mode=c["mode"],
        q_max=rt.q_max,
        eta_sq_max=rt.eta_sq_max,
        eta0_sq=eta0,
        policy=_config.make_policy(cfg, pulse),
    )


def _write_manifest(
    out_dir: Path,
    command: str,
    cfg: dict,
    preset: str | None,
    outputs: list[Path],
    cache_dir: Path | None,
    wall: float,
    extra: dict | None = None,
) -> Path:
    cache_files = {}
    if cache_dir is not None and cache_dir.exists():
        for p in sorted(cache_dir.iterdir()):
            if p.is_file():
                cache_files[p.name] = _cache.file_digest(p)
    manifest = {
        "command": command,
        "version": __version__,
        "preset": preset,
        "config": cfg,
        "outputs": [str(p) for p in outputs],
        "cache_digests": cache_files,
        "wall_time_s": round(wall, 3),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / f"{command}_manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True, default=float)
    return path


def cmd_spectrum(cfg: dict, out_dir: Path, args) -> int:
    start = time.time()
    rt = _runtime(cfg, out_dir)
    spectrum = analysis.full_spectrum(rt.family, rt.eta.sq, rt.basis, cache_dir=rt.cache_dir)
    csv_path = analysis.save_spectrum_csv(spectrum, out_dir / "spectrum.csv")
    _write_manifest(
        out_dir, "spectrum", cfg, args.preset, [csv_path], rt.cache_dir, time.time() - start
    )
    print(f"spectrum: {spectrum.size} states -> {csv_path}")
    return 0


def _replay_final(
    rt: Runtime, psi0: ManyBodyState, t: np.ndarray, phi: np.ndarray, pulse: PulseSpec, horizon: float, dt: float
) -> float:
    src = ReplaySource(t, phi, carrier_period=pulse.t_p)
    traj = evolve(psi0, src, 0.0, horizon, rt.family, rt.engine, dt_override=dt)
    return float(traj.eta_sq[-1])


def cmd_evolve(cfg: dict, out_dir: Path, args) -> int:
    start = time.time()
    rt = _runtime(cfg, out_dir)
    pulse = _config.make_pulse_spec(cfg)
    double = bool(cfg["pulse"]["double"])
    evolve_cfg = cfg.get("evolve", {})
    horizon = (pulse.repeat_offset + pulse.t_f) if double else pulse.t_f
    horizon += float(evolve_cfg.get("extended_horizon", 0.0) or 0.0)

    energy, psi0 = ground_state(rt.family, rt.basis)
    pump = DoublePumpSource(pulse) if double else PumpSource(pulse)
    spec = _control_spec(cfg, rt, pulse)
    source = concatenated_source(pump, spec) if spec is not None else pump

    traj = evolve(
        psi0, source, 0.0, horizon, rt.family, rt.engine,
        record_every=int(cfg["outputs"]["record_every"]),
    )
    outputs = [traj.to_csv(out_dir / "trajectory.csv")]
    t_full, phi_full = traj.field_samples()
    outputs.append(save_field_csv(out_dir / "field.csv", t_full, phi_full, traj.metadata))

    L = rt.basis.L
    summary: dict = {
        "ground_energy": energy,
        "final_eta_sq_per_L": float(traj.eta_sq[-1]) / L,
        "max_eta_sq_per_L": float(traj.eta_sq.max()) / L,
        "t_act": traj.t_act,
        "horizon": horizon,
    }

    if cfg["outputs"]["decompose_final"]:
        spectrum = analysis.full_spectrum(rt.family, rt.eta.sq, rt.basis, cache_dir=rt.cache_dir)
        weights = analysis.decompose(
            traj.final_state, spectrum, threshold=float(cfg["outputs"]["weight_threshold"])
        )
        outputs.append(analysis.save_weights_csv(spectrum, weights, out_dir / "weights.csv"))
        level, e_star, agg = analysis.dominant_level(spectrum, weights)
        summary["dominant_level"] = {
            "eta_sq": level, "energy": e_star, "aggregate_weight": agg,
            "count_above_threshold": weights.count_above_threshold,
        }

    sigmas = list(evolve_cfg.get("smooth_sigmas_periods", ()) or ())
    if sigmas and traj.t_act is not None:
        dt = traj.metadata["dt"]
        window = (traj.t_act - 0.5 * pulse.t_p, traj.t_act + 0.5 * pulse.t_p)
        rows = []
        for frac in sigmas:
            sigma = float(frac) * pulse.t_p
            phi_s = gaussian_smooth(t_full, phi_full, sigma, window)
            final = _replay_final(rt, psi0, t_full, phi_s, pulse, horizon, dt)
            rows.append({"sigma": sigma, "final_eta_sq_per_L": final / L})
        summary["smoothing"] = {"window": window, "results": rows}

    intervals = list(evolve_cfg.get("switch_off_intervals", ()) or ())
    if intervals:
        dt = traj.metadata["dt"]
        t_f0 = pulse.repeat_offset + pulse.t_f if double else pulse.t_f
        rows = []
        for tau1, tau2 in intervals:
            phi_x = switch_off(t_full, phi_full, t_f0 + float(tau1), t_f0 + float(tau2))
            final = _replay_final(rt, psi0, t_full, phi_x, pulse, horizon, dt)
            rows.append({"interval": [t_f0 + float(tau1), t_f0 + float(tau2)],
                         "final_eta_sq_per_L": final / L})
        summary["switch_off"] = {"results": rows}

    summary_path = out_dir / "evolve_summary.json"
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True, default=float)
    outputs.append(summary_path)
    _write_manifest(
        out_dir, "evolve", cfg, args.preset, outputs, rt.cache_dir, time.time() - start
    )
    print(
        f"evolve: final <eta^2>/L = {summary['final_eta_sq_per_L']:.4f} "
        f"(max {summary['max_eta_sq_per_L']:.4f}, t_act {summary['t_act']}) -> {out_dir}"
    )
    return 0


def cmd_scan(cfg: dict, out_dir: Path, args) -> int:
    start = time.time()
    if "scan" not in cfg:
        raise ConfigError("scan command requires a 'scan' section or preset")
    rt = _runtime(cfg, out_dir)
    pulse = _config.make_pulse_spec(cfg)
    s = cfg["scan"]
    grid = _scan.GridSpec.from_ranges(
        s["omega_min"], s["omega_max"], s["omega_step"],
        s["phi0_min"], s["phi0_max"], s["phi0_step"],
    )
    modes = tuple(s["modes"] or ())
    eta0 = s["eta0_sq"]
    if "asymptotic" in modes and eta0 is None:
        eta0 = rt.eta_sq_max
    energy, psi0 = ground_state(rt.family, rt.basis)
    result = _scan.run_grid(
        pulse, grid, rt.family, rt.basis, psi0, rt.engine,
        q_max=rt.q_max, eta_sq_max=rt.eta_sq_max, modes=modes,
        eta0_sq=eta0, workers=args.workers,
    )
    csv_path = result.to_csv(out_dir / "scan.csv")
    partial = bool(result.cell_errors)
    _write_manifest(
        out_dir, "scan", cfg, args.preset, [csv_path], rt.cache_dir,
        time.time() - start,
        extra={"partial": partial, "cell_errors": result.cell_errors},
    )
    print(f"scan: {grid.n_cells} cells -> {csv_path}" + (" [PARTIAL]" if partial else ""))
    return 1 if partial else 0


def cmd_sweep(cfg: dict, out_dir: Path, args) -> int:
    start = time.time()
    if "sweep" not in cfg:
        raise ConfigError("sweep command requires a 'sweep' section or preset")
    rt = _runtime(cfg, out_dir)
    pulse = _config.make_pulse_spec(cfg)
    s = cfg["sweep"]
    if s["t_act_values"] is not None:
        values = [float(v) for v in s["t_act_values"]]
    else:
        values = list(_scan.axis_values(s["t_act_min"], s["t_act_max"], s["t_act_step"]))
    eta0 = s["eta0_sq"]
    if s["mode"] == "asymptotic" and eta0 is None:
        eta0 = rt.eta_sq_max
    energy, psi0 = ground_state(rt.family, rt.basis)
    curve = _scan.activation_sweep(
        pulse, s["mode"], values, rt.family, rt.basis, psi0, rt.engine,
        q_max=rt.q_max, eta_sq_max=rt.eta_sq_max, direction=s["direction"],
        double_pulse=bool(cfg["pulse"]["double"]), eta0_sq=eta0,
        horizon=s["horizon"], workers=args.workers,
    )
    csv_path = curve.to_csv(out_dir / "sweep.csv")
    t_opt, v_opt = curve.optimum()
    _write_manifest(
        out_dir, "sweep", cfg, args.preset, [csv_path], rt.cache_dir,
        time.time() - start,
        extra={
            "optimum": {"t_act": t_opt, "final_eta_sq_per_L": v_opt / rt.basis.L},
            "references": {
                "uncontrolled_per_L": curve.reference_uncontrolled / rt.basis.L,
                "policy_final_per_L": (
                    None if curve.reference_policy_final is None
                    else curve.reference_policy_final / rt.basis.L
                ),
                "policy_t_act": curve.reference_policy_t_act,
            },
        },
    )
    print(
        f"sweep: optimum final <eta^2>/L = {v_opt / rt.basis.L:.4f} at t_act = {t_opt:.3f} "
        f"-> {csv_path}"
    )
    return 0


def cmd_stft(cfg: dict, out_dir: Path, args) -> int:
    start = time.time()
    if args.field is None:
        raise ConfigError("stft requires --field FILE (a CSV with t, phi columns)")
    t, phi = load_field_csv(args.field)
    pulse = _config.make_pulse_spec(cfg)
    stft_cfg = cfg.get("stft") or {k: d for k, (_, d) in _config._SCHEMA["stft"].items()}
    freqs = _scan.axis_values(
        stft_cfg["freq_min"], stft_cfg["freq_max"], stft_cfg["freq_step"]
    )
    gram = analysis.stft(
        t, phi,
        window_width=float(stft_cfg["window_periods"]) * pulse.t_p,
        hop=float(stft_cfg["hop_periods"]) * pulse.t_p,
        freqs=freqs,
    )
    csv_path = analysis.save_spectrogram_csv(gram, out_dir / "spectrogram.csv")
    ridge_path = out_dir / "ridge.csv"
    ridge = gram.ridge()
    with open(ridge_path, "w") as f:
        f.write("t,ridge_omega,border\n")
        for tc, w, b in zip(gram.times, ridge, gram.border_mask):
            f.write(f"{float(tc)!r},{float(w)!r},{int(b)}\n")
    _write_manifest(
        out_dir, "stft", cfg, args.preset, [csv_path, ridge_path], None, time.time() - start
    )
    print(f"stft: {len(gram.times)} windows x {len(gram.freqs)} freqs -> {csv_path}")
    return 0


def cmd_synth(cfg: dict, out_dir: Path, args) -> int:
    """Generate a synthetic field file for exercising the stft command."""
    dt = args.dt
    n = int(round(args.duration / dt)) + 1
    t = dt * np.arange(n)
    if args.kind == "sine":
        phi = args.amplitude * np.sin(args.omega0 * t)
    else:
        # Linear chirp between omega0 and omega1.
        rate = (args.omega1 - args.omega0) / args.duration
        phi = args.amplitude * np.sin((args.omega0 + 0.5 * rate * t) * t)
    if args.noise > 0:
        rng = np.random.default_rng(args.seed)
        phi = phi + args.noise * rng.standard_normal(n)
    path = save_field_csv(
        out_dir / "synth_field.csv", t, phi,
        {"kind": args.kind, "omega0": args.omega0, "omega1": args.omega1,
         "noise": args.noise, "seed": args.seed},
    )
    print(f"synth: {n} samples -> {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etapairing",
        description="Driven Fermi-Hubbard chain: pair-correlator dynamics and feedback control",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("spectrum", cmd_spectrum),
        ("evolve", cmd_evolve),
        ("scan", cmd_scan),
        ("sweep", cmd_sweep),
        ("stft", cmd_stft),
        ("synth", cmd_synth),
    ):
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        p.add_argument("--preset", default=None, metavar="NAME",
                       help=f"named preset, one of: {', '.join(sorted(PRESETS))}")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel worker count")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for synthetic test signals (physics is deterministic)")
        p.add_argument("--extended-horizon", type=float, default=None,
                       help="extra evolution time past the pulse frame")
        if name == "stft":
            p.add_argument("--field", type=Path, default=None, help="field CSV to analyze")
        if name == "synth":
            p.add_argument("--kind", choices=("sine", "chirp"), default="sine")
            p.add_argument("--omega0", type=float, default=19.1)
            p.add_argument("--omega1", type=float, default=19.1)
            p.add_argument("--duration", type=float, default=30.0)
            p.add_argument("--dt", type=float, default=0.005)
            p.add_argument("--amplitude", type=float, default=0.2)
            p.add_argument("--noise", type=float, default=0.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        preset = get_preset(args.preset) if args.preset else None
        overrides: dict = {}
        if args.extended_horizon is not None:
            overrides = {"evolve": {"extended_horizon": args.extended_horizon}}
        cfg = _config.load_config(args.config, preset, overrides)
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, args.out, args)
    except (ConfigError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical or runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
