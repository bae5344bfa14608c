"""Spectral analysis of states and time-frequency analysis of fields.

Provides the full field-free eigenspectrum with pair-correlator labels
(simultaneously diagonalized inside degenerate energy blocks), eigenstate
weight decompositions of evolved states, and a short-time Fourier
transform with ridge extraction for realized control fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cache as _cache
from .basis import SectorBasis
from .evolution import ManyBodyState, Trajectory
from .operators import HamiltonianFamily, SparseOperator

DEGENERACY_RTOL = 1e-8
DEFAULT_WEIGHT_THRESHOLD = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Complete orthonormal eigenbasis of the field-free Hamiltonian.

    ``eta_sq_values[m]`` is the pair-correlator eigenvalue carried by
    eigenvector m; inside each degenerate energy block the basis has been
    rotated so these are sharp (integer eta(eta+1)) values.
    """

    basis: SectorBasis
    energies: np.ndarray
    eta_sq_values: np.ndarray
    vectors: np.ndarray
    cache_path: Path | None = None

    @property
    def size(self) -> int:
        return len(self.energies)


def full_spectrum(
    family: HamiltonianFamily,
    eta_sq_op: SparseOperator,
    basis: SectorBasis,
    cache_dir: str | Path | None = None,
) -> SpectralDecomposition:
    """Dense eigensolve of H(0) with pair-correlator labels per eigenstate.

    The result is cached on disk keyed by (L, sector, t_h, U, layout tag);
    a header mismatch raises instead of serving stale data.
    """
    if cache_dir is not None:
        hit = _cache.load_spectrum(cache_dir, basis, family.t_h, family.u_int)
        if hit is not None:
            energies, eta_vals, vectors = hit
            return SpectralDecomposition(
                basis, energies, eta_vals, vectors,
                _cache.spectrum_path(cache_dir, basis, family.t_h, family.u_int),
            )

    h0 = family.h0().matrix
    dense = h0.toarray().real
    energies, vectors = np.linalg.eigh(dense)

    # Rotate each (near-)degenerate energy block into the eigenbasis of the
    # pair correlator; valid because it commutes with H(0).
    scale = max(abs(energies[0]), abs(energies[-1]))
    tol = DEGENERACY_RTOL * scale
    eta_m = eta_sq_op.matrix
    corr = eta_m @ vectors
    start = 0
    n = len(energies)
    eta_vals = np.empty(n)
    while start < n:
        stop = start + 1
        while stop < n and energies[stop] - energies[stop - 1] <= tol:
            stop += 1
        if stop - start == 1:
            eta_vals[start] = vectors[:, start] @ corr[:, start]
        else:
            block = vectors[:, start:stop]
            small = block.T @ corr[:, start:stop]
            small = 0.5 * (small + small.T)
            vals, rot = np.linalg.eigh(small)
            vectors[:, start:stop] = block @ rot
            corr[:, start:stop] = corr[:, start:stop] @ rot
            eta_vals[start:stop] = vals
        start = stop

    cache_path = None
    if cache_dir is not None:
        cache_path = _cache.store_spectrum(
            cache_dir, basis, family.t_h, family.u_int, energies, eta_vals, vectors
        )
    return SpectralDecomposition(basis, energies, eta_vals, vectors, cache_path)


@dataclass(frozen=True)
class StateWeights:
    """Eigenbasis weights of one state plus threshold bookkeeping."""

    weights: np.ndarray
    threshold: float
    count_above_threshold: int

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def decompose(
    state: ManyBodyState | np.ndarray,
    spectrum: SpectralDecomposition,
    threshold: float = DEFAULT_WEIGHT_THRESHOLD,
) -> StateWeights:
    """Occupation probabilities |<psi_m|Psi>|^2 of every eigenstate."""
    amps = np.asarray(getattr(state, "amplitudes", state))
    if amps.shape[0] != spectrum.vectors.shape[0]:
        raise ValueError(
            f"dimension mismatch: state {amps.shape[0]}, spectrum {spectrum.vectors.shape[0]}"
        )
    overlaps = spectrum.vectors.T @ amps
    weights = np.abs(overlaps) ** 2
    return StateWeights(
        weights=weights,
        threshold=threshold,
        count_above_threshold=int(np.count_nonzero(weights >= threshold)),
    )


def aggregate_weight(
    spectrum: SpectralDecomposition,
    weights: StateWeights | np.ndarray,
    eta_sq_value: float,
    energy_center: float,
    energy_halfwidth: float,
    eta_sq_tol: float = 1e-6,
) -> float:
    """Total weight on eigenstates at one (energy band, eta^2 level) spot."""
    w = np.asarray(getattr(weights, "weights", weights))
    mask = (np.abs(spectrum.eta_sq_values - eta_sq_value) <= eta_sq_tol) & (
        np.abs(spectrum.energies - energy_center) <= energy_halfwidth
    )
    return float(w[mask].sum())


def dominant_level(
    spectrum: SpectralDecomposition,
    weights: StateWeights,
    energy_halfwidth: float = 2.0,
) -> tuple[float, float, float]:
    """(eta_sq_value, mean_energy, aggregate_weight) of the most occupied spot.

    States are grouped by pair-correlator level and an energy window of
    ``energy_halfwidth`` around the weight-averaged band position.
    """
    w = weights.weights
    m_star = int(np.argmax(w))
    level = spectrum.eta_sq_values[m_star]
    e_star = spectrum.energies[m_star]
    agg = aggregate_weight(spectrum, weights, level, e_star, energy_halfwidth)
    return float(level), float(e_star), agg


# --- short-time Fourier analysis ---------------------------------------------


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """|S(omega, t)| of a sampled field with border bookkeeping."""

    times: np.ndarray
    freqs: np.ndarray
    magnitude: np.ndarray  # shape (n_times, n_freqs)
    border_mask: np.ndarray  # True where the window leaves the field support
    window_width: float
    hop: float
    support: tuple[float, float]

    def ridge(self) -> np.ndarray:
        """Frequency of maximal magnitude at each window position."""
        return self.freqs[np.argmax(self.magnitude, axis=1)]


def stft(
    t: np.ndarray,
    phi: np.ndarray,
    window_width: float,
    hop: float,
    freqs: np.ndarray,
    support: tuple[float, float] | None = None,
) -> Spectrogram:
    """Sliding Gaussian-window Fourier magnitude of a uniformly sampled field.

    The Gaussian std is a quarter of the window width (window truncated at
    +-2 std).  ``support`` marks where the field is genuinely nonzero;
    windows extending beyond it are flagged as border-affected.  By default
    the support is read off the samples themselves.
    """
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if len(t) < 2:
        raise ValueError("need at least two samples")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
        raise ValueError("stft requires a uniform sample grid")
    dt = float(dts[0])
    half = int(round(0.5 * window_width / dt))
    if 2 * half + 1 > len(t):
        raise ValueError("window longer than the signal")
    hop_steps = max(1, int(round(hop / dt)))
    sigma = 0.25 * window_width

    if support is None:
        nz = np.where(np.abs(phi) > 0)[0]
        if len(nz) == 0:
            support = (t[0], t[0])
        else:
            support = (float(t[nz[0]]), float(t[nz[-1]]))

    centers = np.arange(half, len(t) - half, hop_steps)
    offsets = np.arange(-half, half + 1) * dt
    window = np.exp(-0.5 * (offsets / sigma) ** 2)
    freqs = np.asarray(freqs, dtype=float)
    # (n_offsets, n_freqs) phase table; per-center phase factored out since
    # only magnitudes are kept.
    phase = np.exp(-1j * np.outer(offsets, freqs)) * window[:, None] * dt

    mags = np.empty((len(centers), len(freqs)))
    border = np.empty(len(centers), dtype=bool)
    for row, c in enumerate(centers):
        seg = phi[c - half : c + half + 1]
        mags[row] = np.abs(seg @ phase)
        border[row] = (t[c] - 0.5 * window_width < support[0] - 1e-9) or (
            t[c] + 0.5 * window_width > support[1] + 1e-9
        )
    return Spectrogram(
        times=t[centers].copy(),
        freqs=freqs,
        magnitude=mags,
        border_mask=border,
        window_width=window_width,
        hop=hop_steps * dt,
        support=support,
    )


@dataclass(frozen=True)
class TrajectorySummary:
    max_eta_sq: float
    final_eta_sq: float
    t_of_max: float
    t_act: float | None


def trajectory_summary(traj: Trajectory) -> TrajectorySummary:
    """Maximum and final pair correlator of a recorded evolution."""
    if len(traj.t) == 0:
        raise ValueError("empty trajectory")
    k = int(np.argmax(traj.eta_sq))
    return TrajectorySummary(
        max_eta_sq=float(traj.eta_sq[k]),
        final_eta_sq=float(traj.eta_sq[-1]),
        t_of_max=float(traj.t[k]),
        t_act=traj.t_act,
    )


def save_spectrum_csv(spectrum: SpectralDecomposition, path: str | Path) -> Path:
    """Write (index, energy, eta_sq, eta_sq_per_L) rows for scatter plots."""
    path = Path(path)
    L = spectrum.basis.L
    with open(path, "w") as f:
        f.write("m,energy,eta_sq,eta_sq_per_L\n")
        for m in range(spectrum.size):
            e = float(spectrum.energies[m])
            v = float(spectrum.eta_sq_values[m])
            f.write(f"{m},{e!r},{v!r},{v / L!r}\n")
    return path


def save_weights_csv(
    spectrum: SpectralDecomposition,
    weights: StateWeights,
    path: str | Path,
) -> Path:
    """Write (m, energy, eta_sq_per_L, weight) rows above the threshold."""
    path = Path(path)
    L = spectrum.basis.L
    with open(path, "w") as f:
        f.write("m,energy,eta_sq_per_L,weight\n")
        for m in range(spectrum.size):
            w = float(weights.weights[m])
            if w < weights.threshold:
                continue
            f.write(
                f"{m},{float(spectrum.energies[m])!r},"
                f"{float(spectrum.eta_sq_values[m]) / L!r},{w!r}\n"
            )
    return path


def save_spectrogram_csv(spectrogram: Spectrogram, path: str | Path) -> Path:
    """Write long-format (t, omega, magnitude, border) rows."""
    path = Path(path)
    with open(path, "w") as f:
        f.write("t,omega,magnitude,border\n")
        for i, tc in enumerate(spectrogram.times):
            b = int(spectrogram.border_mask[i])
            for j, w in enumerate(spectrogram.freqs):
                f.write(f"{float(tc)!r},{float(w)!r},{float(spectrogram.magnitude[i, j])!r},{b}\n")
    return path
