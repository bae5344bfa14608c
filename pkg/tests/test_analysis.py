"""Spectrum labelling, weight decomposition, STFT, trajectory summaries."""

import json

import numpy as np
import pytest

from etapairing.analysis import (
    decompose,
    dominant_level,
    full_spectrum,
    save_spectrogram_csv,
    save_spectrum_csv,
    save_weights_csv,
    stft,
    trajectory_summary,
)
from etapairing.cache import CacheMismatchError, load_spectrum
from etapairing.evolution import ManyBodyState, PropagatorConfig, Trajectory, evolve
from etapairing.operators import expectation
from etapairing.pulses import ConstantSource


@pytest.fixture(scope="module")
def spectrum4(sys4):
    return full_spectrum(sys4.family, sys4.eta.sq, sys4.basis)


def test_spectrum_size_and_order(spectrum4, sys4):
    assert spectrum4.size == sys4.basis.dim == 36
    assert np.all(np.diff(spectrum4.energies) >= -1e-12)


def test_labels_are_multiplet_values(spectrum4):
    allowed = np.array([0.0, 2.0, 6.0])
    dist = np.abs(spectrum4.eta_sq_values[:, None] - allowed[None, :]).min(axis=1)
    assert dist.max() < 1e-8


def test_simultaneous_diagonalization_residual(spectrum4, sys4):
    resid = sys4.eta.sq.matrix @ spectrum4.vectors - spectrum4.vectors * spectrum4.eta_sq_values
    assert np.linalg.norm(resid, axis=0).max() <= 1e-6


def test_eigenbasis_orthonormal(spectrum4):
    v = spectrum4.vectors
    assert np.allclose(v.T @ v, np.eye(v.shape[1]), atol=1e-10)


def test_decompose_eigenstate(spectrum4):
    k = 7
    state = ManyBodyState(spectrum4.vectors[:, k].astype(complex), 0.0)
    w = decompose(state, spectrum4)
    assert w.weights[k] == pytest.approx(1.0, abs=1e-12)
    others = np.delete(w.weights, k)
    assert others.max() <= 1e-20


def test_decompose_normalization_and_consistency(spectrum4, sys4):
    rng = np.random.default_rng(9)
    v = rng.standard_normal(36) + 1j * rng.standard_normal(36)
    state = ManyBodyState(v / np.linalg.norm(v), 0.0)
    w = decompose(state, spectrum4)
    assert w.total == pytest.approx(1.0, abs=1e-8)
    mean = float(np.dot(w.weights, spectrum4.eta_sq_values))
    assert mean == pytest.approx(expectation(sys4.eta.sq, state).real, abs=1e-8)


def test_decompose_dimension_mismatch(spectrum4):
    with pytest.raises(ValueError, match="dimension mismatch"):
        decompose(np.ones(7), spectrum4)


def test_spectrum_cache_round_trip(tmp_path, sys4):
    first = full_spectrum(sys4.family, sys4.eta.sq, sys4.basis, cache_dir=tmp_path)
    assert first.cache_path is not None and first.cache_path.exists()
    again = full_spectrum(sys4.family, sys4.eta.sq, sys4.basis, cache_dir=tmp_path)
    assert np.array_equal(first.energies, again.energies)
    assert np.array_equal(first.vectors, again.vectors)
    # different interaction -> different key -> cache miss
    assert load_spectrum(tmp_path, sys4.basis, 1.0, 7.5) is None


def test_spectrum_cache_header_rejects_tamper(tmp_path, sys4):
    spec = full_spectrum(sys4.family, sys4.eta.sq, sys4.basis, cache_dir=tmp_path)
    data = dict(np.load(spec.cache_path))
    header = json.loads(str(data["header"]))
    header["U"] = 999.0
    data["header"] = json.dumps(header, sort_keys=True)
    np.savez(spec.cache_path, **data)
    with pytest.raises(CacheMismatchError):
        full_spectrum(sys4.family, sys4.eta.sq, sys4.basis, cache_dir=tmp_path)


def test_spectrum_csv(tmp_path, spectrum4):
    path = save_spectrum_csv(spectrum4, tmp_path / "s.csv")
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "m,energy,eta_sq,eta_sq_per_L"
    assert len(rows) == 37


def test_weights_csv(tmp_path, spectrum4):
    state = ManyBodyState(spectrum4.vectors[:, 3].astype(complex), 0.0)
    w = decompose(state, spectrum4)
    path = save_weights_csv(spectrum4, w, tmp_path / "w.csv")
    rows = path.read_text().strip().splitlines()
    assert len(rows) == 2  # header + the single occupied eigenstate


# --- STFT -----------------------------------------------------------------------


def _sine_field(omega: float, t_end: float, dt: float = 0.005):
    t = np.arange(0.0, t_end, dt)
    return t, 0.2 * np.sin(omega * t)


def test_stft_pure_tone_ridge():
    t, phi = _sine_field(19.1, 40.0)
    freqs = np.arange(10.0, 30.0, 0.05)
    gram = stft(t, phi, window_width=4.0, hop=0.5, freqs=freqs)
    ridge = gram.ridge()
    interior = ~gram.border_mask
    assert interior.any()
    assert np.abs(ridge[interior] - 19.1).max() <= 0.05 + 1e-9


def test_stft_chirp_ridge_monotone():
    dt = 0.005
    t = np.arange(0.0, 60.0, dt)
    w0, w1 = 12.0, 25.0
    rate = (w1 - w0) / t[-1]
    phi = np.sin((w0 + 0.5 * rate * t) * t)  # instantaneous freq w0 + rate t
    freqs = np.arange(8.0, 30.0, 0.05)
    gram = stft(t, phi, window_width=3.0, hop=1.0, freqs=freqs)
    ridge = gram.ridge()[~gram.border_mask]
    diffs = np.diff(ridge)
    assert np.all(diffs >= -0.06)  # monotone up to one bin of jitter
    assert ridge[-1] - ridge[0] > 9.0


def test_stft_zero_signal():
    t = np.arange(0.0, 10.0, 0.01)
    gram = stft(t, np.zeros_like(t), window_width=2.0, hop=0.5, freqs=np.arange(1.0, 5.0, 0.1))
    assert np.all(gram.magnitude == 0.0)


def test_stft_border_mask():
    t, phi = _sine_field(19.1, 20.0)
    gram = stft(t, phi, window_width=4.0, hop=0.5, freqs=np.arange(15.0, 25.0, 0.1))
    # support starts late and the mask reflects it
    assert gram.border_mask[0]
    assert not gram.border_mask[len(gram.times) // 2]


def test_stft_validation():
    t = np.arange(0.0, 1.0, 0.01)
    with pytest.raises(ValueError, match="window longer"):
        stft(t, np.zeros_like(t), window_width=5.0, hop=0.1, freqs=np.array([1.0]))
    with pytest.raises(ValueError, match="uniform"):
        stft(np.array([0.0, 0.1, 0.3]), np.zeros(3), 0.1, 0.1, np.array([1.0]))


def test_spectrogram_csv(tmp_path):
    t, phi = _sine_field(19.1, 15.0)
    gram = stft(t, phi, window_width=3.0, hop=1.0, freqs=np.arange(18.0, 20.0, 0.5))
    path = save_spectrogram_csv(gram, tmp_path / "g.csv")
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "t,omega,magnitude,border"
    assert len(rows) == 1 + len(gram.times) * len(gram.freqs)


# --- trajectory summaries ---------------------------------------------------------


def test_summary_constant_trajectory(sys4, ground4):
    _, psi = ground4
    traj = evolve(
        psi, ConstantSource(0.0), 0.0, 1.0, sys4.family, PropagatorConfig(dt_absolute=0.05)
    )
    s = trajectory_summary(traj)
    assert s.max_eta_sq == pytest.approx(s.final_eta_sq, abs=1e-12)
    assert s.t_act is None


def test_summary_empty_rejected():
    empty = Trajectory(
        t=np.array([]), phi=np.array([]), eta_sq=np.array([]), q=np.array([]),
        norm=np.array([]), control_active=np.array([], dtype=bool), metadata={"L": 4},
    )
    with pytest.raises(ValueError, match="empty"):
        trajectory_summary(empty)


def test_dominant_level_picks_heaviest_spot(spectrum4):
    # Two eigenstates from distinct levels, 64/36 split.
    idx_a = int(np.argmax(spectrum4.eta_sq_values))  # the top multiplet
    idx_b = 0
    v = 0.8 * spectrum4.vectors[:, idx_a] + 0.6 * spectrum4.vectors[:, idx_b]
    w = decompose(ManyBodyState(v.astype(complex), 0.0), spectrum4)
    level, energy, agg = dominant_level(spectrum4, w)
    assert level == pytest.approx(spectrum4.eta_sq_values[idx_a], abs=1e-8)
    assert agg >= 0.64 - 1e-9
