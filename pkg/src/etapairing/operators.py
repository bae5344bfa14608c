"""Sparse many-body operators on a sector basis.

Builds the driven-chain Hamiltonian pieces, the staggered pair (eta)
algebra, and the drift generator that controls the growth rate of the
pairing correlator, plus expectation values and extreme eigenvalues.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import OpSpec, SectorBasis, apply_ops, build_sector_basis, chain_bonds
from . import cache as _cache

PRUNE_TOL = 1e-15

# One term of an operator sum: (coefficient, elementary-operator product).
Term = tuple[float, tuple[OpSpec, ...]]


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Compressed sparse complex/real matrix mapping col_basis -> row_basis."""

    matrix: sp.csr_matrix
    hermitian: bool
    row_basis: SectorBasis
    col_basis: SectorBasis

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(
            matrix=self.matrix.conj().T.tocsr(),
            hermitian=self.hermitian,
            row_basis=self.col_basis,
            col_basis=self.row_basis,
        )


def _prune(m: sp.csr_matrix) -> sp.csr_matrix:
    m = m.tocsr()
    m.sum_duplicates()
    m.data[np.abs(m.data) <= PRUNE_TOL] = 0.0
    m.eliminate_zeros()
    m.sort_indices()
    return m


def assemble_operator(
    basis_from: SectorBasis, basis_to: SectorBasis, terms: Sequence[Term]
) -> sp.csr_matrix:
    """Assemble sum(coeff * product-of-elementary-ops) as a CSR matrix.

    Every term must map the source sector into the target sector; a term
    landing outside ``basis_to`` is a programming error and raises.
    """
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    nd = basis_to.n_down_dets
    up_index = basis_to.up_index
    down_index = basis_to.down_index
    for k in range(basis_from.dim):
        mu, md = basis_from.state_masks(k)
        for coeff, ops in terms:
            res = apply_ops(mu, md, ops)
            if res is None:
                continue
            nu, ndn, sign = res
            try:
                r = up_index[nu] * nd + down_index[ndn]
            except KeyError:
                raise ValueError(
                    "operator term leaves the target sector; "
                    f"check particle-number bookkeeping for ops {ops}"
                ) from None
            rows.append(r)
            cols.append(k)
            vals.append(coeff * sign)
    m = sp.coo_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(basis_to.dim, basis_from.dim),
    )
    return _prune(m.tocsr())


@dataclass(frozen=True, eq=False)
class HamiltonianFamily:
    """Hopping/interaction pieces from which H(phi) is assembled per step.

    H(phi) = -t_h (e^{i phi} K + e^{-i phi} K^dag) + U D with K the forward
    hopping sum over both spins on the periodic chain and D the doublon
    counter.  K and D are built once; the phase enters only through two
    scalars, so re-assembly per feedback step costs O(nnz).
    """

    basis: SectorBasis
    t_h: float
    u_int: float
    k_forward: sp.csr_matrix
    k_backward: sp.csr_matrix
    doublons: np.ndarray

    def hamiltonian(self, phi: float) -> SparseOperator:
        a = -self.t_h * np.exp(1j * phi)
        m = a * self.k_forward + np.conj(a) * self.k_backward
        m = m + sp.diags(self.u_int * self.doublons)
        return SparseOperator(
            matrix=_prune(m.tocsr()),
            hermitian=True,
            row_basis=self.basis,
            col_basis=self.basis,
        )

    def h0(self) -> SparseOperator:
        return self.hamiltonian(0.0)

    def spectral_bounds(self) -> tuple[float, float]:
        """Gershgorin bounds on the spectrum of H(phi), valid for all phi."""
        radius = self.t_h * np.asarray(
            np.abs(self.k_forward).sum(axis=0) + np.abs(self.k_backward).sum(axis=0)
        ).ravel()
        diag = self.u_int * self.doublons
        return float(np.min(diag - radius)), float(np.max(diag + radius))


def build_hamiltonian_family(
    basis: SectorBasis, t_h: float = 1.0, u_int: float = 20.0
) -> HamiltonianFamily:
    """Assemble the hopping and interaction operators for a sector."""
    hops: list[Term] = []
    for i, j in chain_bonds(basis.L):
        hops.append((1.0, ((True, 0, i), (False, 0, j))))
        hops.append((1.0, ((True, 1, i), (False, 1, j))))
    k = assemble_operator(basis, basis, hops)
    return HamiltonianFamily(
        basis=basis,
        t_h=float(t_h),
        u_int=float(u_int),
        k_forward=k,
        k_backward=k.T.tocsr(),
        doublons=np.array(basis.doublon_counts(), dtype=float),
    )


def _raised_basis(basis: SectorBasis) -> SectorBasis | None:
    if basis.n_up + 1 > basis.L or basis.n_down + 1 > basis.L:
        return None
    return build_sector_basis(basis.L, basis.n_up + 1, basis.n_down + 1)


def _lowered_basis(basis: SectorBasis) -> SectorBasis | None:
    if basis.n_up - 1 < 0 or basis.n_down - 1 < 0:
        return None
    return build_sector_basis(basis.L, basis.n_up - 1, basis.n_down - 1)


def _require_even(basis: SectorBasis) -> None:
    if basis.L % 2:
        raise ValueError(
            "staggered operator ill-defined on odd periodic ring (L must be even)"
        )


def _pair_raise_matrix(basis: SectorBasis) -> tuple[sp.csr_matrix, SectorBasis | None]:
    """Staggered on-site pair creation sum_i (-1)^i c^dag_{i,dn} c^dag_{i,up}."""
    target = _raised_basis(basis)
    if target is None:
        return sp.csr_matrix((0, basis.dim)), None
    terms: list[Term] = [
        (float((-1) ** i), ((True, 1, i), (True, 0, i))) for i in range(basis.L)
    ]
    return assemble_operator(basis, target, terms), target


def _pair_lower_matrix(basis: SectorBasis) -> tuple[sp.csr_matrix, SectorBasis | None]:
    """Adjoint partner sum_i (-1)^i c_{i,up} c_{i,dn} acting on ``basis``."""
    target = _lowered_basis(basis)
    if target is None:
        return sp.csr_matrix((0, basis.dim)), None
    terms: list[Term] = [
        (float((-1) ** i), ((False, 0, i), (False, 1, i))) for i in range(basis.L)
    ]
    return assemble_operator(basis, target, terms), target


def _adjacent_pair_raise_matrix(
    basis: SectorBasis,
) -> tuple[sp.csr_matrix, SectorBasis | None]:
    """Staggered nearest-neighbour singlet pair creation.

    sum_i (-1)^i (c^dag_{i,up} c^dag_{i+1,dn} - c^dag_{i,dn} c^dag_{i+1,up})
    on the periodic ring.
    """
    target = _raised_basis(basis)
    if target is None:
        return sp.csr_matrix((0, basis.dim)), None
    terms: list[Term] = []
    for i in range(basis.L):
        ip = (i + 1) % basis.L
        s = float((-1) ** i)
        terms.append((s, ((True, 0, i), (True, 1, ip))))
        terms.append((-s, ((True, 1, i), (True, 0, ip))))
    return assemble_operator(basis, target, terms), target


@dataclass(frozen=True, eq=False)
class EtaOperators:
    """Staggered pair-ladder algebra restricted to one sector.

    ``plus`` maps the sector into the doubly-raised sector, ``minus`` into
    the doubly-lowered sector; ``sq`` and ``z`` are endomorphisms.
    """

    plus: SparseOperator
    minus: SparseOperator
    z: SparseOperator
    sq: SparseOperator
    z_value: float


def build_eta_operators(basis: SectorBasis) -> EtaOperators:
    """Build eta+, eta-, eta_z and eta^2 on the given sector.

    eta^2 = (eta+ eta- + eta- eta+)/2 + eta_z^2 is assembled from the
    rectangular ladder matrices, which makes it hermitian and positive
    semidefinite by construction.
    """
    _require_even(basis)
    plus_m, raised = _pair_raise_matrix(basis)
    minus_m, lowered = _pair_lower_matrix(basis)
    z_value = 0.5 * (basis.n_up + basis.n_down - basis.L)

    # eta+ eta- = minus^dag minus, eta- eta+ = plus^dag plus on this sector.
    sq = 0.5 * (minus_m.conj().T @ minus_m + plus_m.conj().T @ plus_m)
    sq = sq + sp.diags(np.full(basis.dim, z_value**2))
    eye_basis = basis
    return EtaOperators(
        plus=SparseOperator(plus_m, False, raised or basis, basis),
        minus=SparseOperator(minus_m, False, lowered or basis, basis),
        z=SparseOperator(
            sp.diags(np.full(basis.dim, z_value)).tocsr(), True, eye_basis, eye_basis
        ),
        sq=SparseOperator(_prune(sq.tocsr()), True, basis, basis),
        z_value=z_value,
    )


def build_drift_generator(basis: SectorBasis) -> SparseOperator:
    """Hermitian generator of the field-induced drift of the pair correlator.

    Built from the anticommutator factorisation {X, Y} + h.c. with X the
    staggered adjacent pair creator and Y the staggered on-site pair
    annihilator; an independent dense commutator oracle validates it in the
    test suite.
    """
    _require_even(basis)
    y_m, lowered = _pair_lower_matrix(basis)
    x_m, raised = _adjacent_pair_raise_matrix(basis)

    z = sp.csr_matrix((basis.dim, basis.dim))
    if lowered is not None:
        x_low, back = _adjacent_pair_raise_matrix(lowered)
        if back is not None:
            # X Y: lower into S-, then raise back into S.
            z = z + x_low @ y_m
    if raised is not None:
        y_up, back = _pair_lower_matrix(raised)
        if back is not None:
            # Y X: raise into S+, then lower back into S.
            z = z + y_up @ x_m
    q = z + z.conj().T
    return SparseOperator(_prune(q.tocsr()), True, basis, basis)


_ETA_CACHE: "weakref.WeakKeyDictionary[SectorBasis, EtaOperators]" = weakref.WeakKeyDictionary()
_DRIFT_CACHE: "weakref.WeakKeyDictionary[SectorBasis, SparseOperator]" = weakref.WeakKeyDictionary()


def get_eta_operators(basis: SectorBasis) -> EtaOperators:
    """Per-basis memoized :func:`build_eta_operators`."""
    ops = _ETA_CACHE.get(basis)
    if ops is None:
        ops = build_eta_operators(basis)
        _ETA_CACHE[basis] = ops
    return ops


def get_drift_generator(basis: SectorBasis) -> SparseOperator:
    """Per-basis memoized :func:`build_drift_generator`."""
    op = _DRIFT_CACHE.get(basis)
    if op is None:
        op = build_drift_generator(basis)
        _DRIFT_CACHE[basis] = op
    return op


def expectation(op: SparseOperator, state: object) -> complex:
    """<psi|op|psi> for a normalized state.

    Accepts a ManyBodyState or a bare amplitude vector.  For hermitian
    operators the imaginary residue must stay below 1e-10.
    """
    amps = np.asarray(getattr(state, "amplitudes", state))
    if amps.shape[0] != op.matrix.shape[1] or op.matrix.shape[0] != amps.shape[0]:
        raise ValueError(
            f"dimension mismatch: operator {op.matrix.shape}, state {amps.shape}"
        )
    nrm = np.linalg.norm(amps)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"state not normalized: ||psi|| = {nrm!r}")
    val = complex(np.vdot(amps, op.matrix @ amps))
    if op.hermitian and abs(val.imag) > 1e-10:
        raise FloatingPointError(
            f"imaginary residue {val.imag:.3e} on hermitian expectation"
        )
    return val


DENSE_EIG_MAX_DIM = 1000


def max_abs_eigenvalue(
    op: SparseOperator,
    cache_dir: str | None = None,
    label: str | None = None,
    method: str = "auto",
) -> float:
    """Largest |eigenvalue| of a hermitian operator.

    ``auto`` solves densely below ``DENSE_EIG_MAX_DIM`` and otherwise
    iterates an extremal eigenvalue of op^2 (relative accuracy better than
    1e-8).  Results can be cached on disk keyed by sector and ``label``.
    """
    if not op.hermitian:
        raise ValueError("max_abs_eigenvalue requires a hermitian operator")
    if method not in ("auto", "dense", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    if cache_dir is not None and label is not None:
        cached = _cache.load_scalar(cache_dir, label, op.col_basis)
        if cached is not None:
            return cached
    dim = op.matrix.shape[0]
    if op.matrix.nnz == 0:
        out = 0.0
    elif method == "dense" or (method == "auto" and dim <= DENSE_EIG_MAX_DIM):
        vals = np.linalg.eigvalsh(op.matrix.toarray())
        out = float(np.max(np.abs(vals)))
    else:
        m = op.matrix
        sq = spla.LinearOperator(
            shape=m.shape,
            matvec=lambda v: m @ (m @ v),
            dtype=np.result_type(m.dtype, np.float64),
        )
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        val = spla.eigsh(sq, k=1, which="LA", v0=v0, tol=1e-10, return_eigenvectors=False)
        out = float(np.sqrt(max(val[0], 0.0)))
    if cache_dir is not None and label is not None:
        _cache.store_scalar(cache_dir, label, op.col_basis, out)
    return out
