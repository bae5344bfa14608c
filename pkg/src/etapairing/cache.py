"""Self-describing disk caches for extreme eigenvalues and spectra.

Every cache artifact carries a header (format version, L, n_up, n_down,
t_h, U, index-layout tag).  A header that does not match the requesting
context raises :class:`CacheMismatchError` instead of silently serving
stale data.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .basis import LAYOUT_TAG, SectorBasis

CACHE_FORMAT_VERSION = 1


class CacheMismatchError(RuntimeError):
    """A cache file exists but its header does not match the request."""


def _header(basis: SectorBasis, t_h: float | None, u_int: float | None) -> dict:
    return {
        "format_version": CACHE_FORMAT_VERSION,
        "layout": LAYOUT_TAG,
        "L": basis.L,
        "n_up": basis.n_up,
        "n_down": basis.n_down,
        "t_h": t_h,
        "U": u_int,
    }


def _check_header(found: dict, expected: dict, path: Path) -> None:
    if found != expected:
        raise CacheMismatchError(
            f"cache header mismatch in {path}: found {found}, expected {expected}. "
            f"Delete the file or point the run at a fresh cache directory."
        )


def _scalar_path(cache_dir: str | Path, label: str, basis: SectorBasis) -> Path:
    return Path(cache_dir) / f"{label}_L{basis.L}_{basis.n_up}_{basis.n_down}.json"


def load_scalar(cache_dir: str | Path, label: str, basis: SectorBasis) -> float | None:
    path = _scalar_path(cache_dir, label, basis)
    if not path.exists():
        return None
    payload = json.loads(path.read_text())
    _check_header(payload.get("header"), _header(basis, None, None), path)
    return float(payload["value"])


def store_scalar(
    cache_dir: str | Path, label: str, basis: SectorBasis, value: float
) -> Path:
    path = _scalar_path(cache_dir, label, basis)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"header": _header(basis, None, None), "label": label, "value": value}
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))
    return path


def spectrum_path(
    cache_dir: str | Path, basis: SectorBasis, t_h: float, u_int: float
) -> Path:
    tag = f"L{basis.L}_{basis.n_up}_{basis.n_down}_th{t_h:g}_U{u_int:g}"
    return Path(cache_dir) / f"spectrum_{tag}.npz"


def load_spectrum(
    cache_dir: str | Path, basis: SectorBasis, t_h: float, u_int: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Return (energies, pair_correlator_values, eigenvectors) or None."""
    path = spectrum_path(cache_dir, basis, t_h, u_int)
    if not path.exists():
        return None
    with np.load(path) as data:
        found = json.loads(str(data["header"]))
        _check_header(found, _header(basis, t_h, u_int), path)
        return data["energies"], data["eta_sq"], data["vectors"]


def store_spectrum(
    cache_dir: str | Path,
    basis: SectorBasis,
    t_h: float,
    u_int: float,
    energies: np.ndarray,
    eta_sq: np.ndarray,
    vectors: np.ndarray,
) -> Path:
    path = spectrum_path(cache_dir, basis, t_h, u_int)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        header=json.dumps(_header(basis, t_h, u_int), sort_keys=True),
        energies=energies,
        eta_sq=eta_sq,
        vectors=vectors,
    )
    return path


def file_digest(path: str | Path) -> str:
    """Short content hash used to stamp run manifests."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
