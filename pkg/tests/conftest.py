"""Shared fixtures: small-chain operator sets and the benchmark system.

The heavy L=8 artifacts (full spectrum, extreme eigenvalues) are cached in
a repo-local directory so repeated test runs skip the dense eigensolve;
cache headers guarantee staleness is detected.
"""

from __future__ import annotations

from pathlib import Path
from types import SimpleNamespace

import pytest

from etapairing.basis import build_sector_basis
from etapairing.evolution import ground_state
from etapairing.operators import (
    build_hamiltonian_family,
    get_drift_generator,
    get_eta_operators,
    max_abs_eigenvalue,
)

CACHE_DIR = Path(__file__).resolve().parent.parent / ".cache"


def _system(L: int, u_int: float = 20.0):
    basis = build_sector_basis(L, L // 2, L // 2)
    family = build_hamiltonian_family(basis, 1.0, u_int)
    return SimpleNamespace(
        basis=basis,
        family=family,
        eta=get_eta_operators(basis),
        drift=get_drift_generator(basis),
    )


@pytest.fixture(scope="session")
def sys4():
    return _system(4)


@pytest.fixture(scope="session")
def sys8():
    return _system(8)


@pytest.fixture(scope="session")
def ground4(sys4):
    return ground_state(sys4.family, sys4.basis)


@pytest.fixture(scope="session")
def ground8(sys8):
    return ground_state(sys8.family, sys8.basis)


@pytest.fixture(scope="session")
def cache_dir():
    CACHE_DIR.mkdir(exist_ok=True)
    return CACHE_DIR


@pytest.fixture(scope="session")
def bounds8(sys8, cache_dir):
    q_max = max_abs_eigenvalue(sys8.drift, cache_dir=cache_dir, label="q_max")
    eta_sq_max = max_abs_eigenvalue(sys8.eta.sq, cache_dir=cache_dir, label="eta_sq_max")
    return SimpleNamespace(q_max=q_max, eta_sq_max=eta_sq_max)
