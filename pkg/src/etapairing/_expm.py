"""Jitted kernels: sparse matvec and per-step exponential propagators.

The chain Hamiltonian is applied as
``H(phi) v = a (K v) + conj(a) (K^T v) + diag v`` with ``a = -t_h e^{i phi}``,
so the CSR structure of the hopping matrix never changes between steps.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _h_matvec(kp, ki, kv, tp, ti, tv, diag, ar, ai, v, out):
    n = v.shape[0]
    a = complex(ar, ai)
    ac = complex(ar, -ai)
    for r in range(n):
        acc_f = 0.0 + 0.0j
        for p in range(kp[r], kp[r + 1]):
            acc_f += kv[p] * v[ki[p]]
        acc_b = 0.0 + 0.0j
        for p in range(tp[r], tp[r + 1]):
            acc_b += tv[p] * v[ti[p]]
        out[r] = a * acc_f + ac * acc_b + diag[r] * v[r]


@njit(cache=True)
def expect_real(indptr, indices, data, v):
    """Re <v|M|v> for a real CSR matrix M and complex vector v."""
    n = v.shape[0]
    acc = 0.0
    for r in range(n):
        row = 0.0 + 0.0j
        for p in range(indptr[r], indptr[r + 1]):
            row += data[p] * v[indices[p]]
        acc += (np.conj(v[r]) * row).real
    return acc


@njit(cache=True)
def lanczos_expm(kp, ki, kv, tp, ti, tv, diag, ar, ai, v, dt, m_max, tol):
    """Apply exp(-i dt H(phi)) to v via a Lanczos subspace.

    Iterates until the a-posteriori error estimate drops below ``tol`` or
    the subspace is exhausted (m_used = -1 signals non-convergence).
    Returns (result, m_used).
    """
    n = v.shape[0]
    if dt == 0.0:
        return v.copy(), 0
    basis = np.zeros((m_max + 1, n), np.complex128)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max + 1)
    basis[0] = v
    w = np.zeros(n, np.complex128)
    for j in range(m_max):
        _h_matvec(kp, ki, kv, tp, ti, tv, diag, ar, ai, basis[j], w)
        a_j = 0.0
        for r in range(n):
            a_j += (np.conj(basis[j][r]) * w[r]).real
        alpha[j] = a_j
        if j > 0:
            b_prev = beta[j]
            for r in range(n):
                w[r] -= a_j * basis[j][r] + b_prev * basis[j - 1][r]
        else:
            for r in range(n):
                w[r] -= a_j * basis[j][r]
        # Full reorthogonalization: cheap at these subspace sizes and keeps
        # the propagator unitary to machine precision.
        for k in range(j + 1):
            ov = 0.0 + 0.0j
            for r in range(n):
                ov += np.conj(basis[k][r]) * w[r]
            for r in range(n):
                w[r] -= ov * basis[k][r]
        b = 0.0
        for r in range(n):
            b += (np.conj(w[r]) * w[r]).real
        b = np.sqrt(b)
        beta[j + 1] = b
        m = j + 1
        tri = np.zeros((m, m))
        for r in range(m):
            tri[r, r] = alpha[r]
        for r in range(m - 1):
            tri[r, r + 1] = beta[r + 1]
            tri[r + 1, r] = beta[r + 1]
        evals, evecs = np.linalg.eigh(tri)
        small = np.zeros(m, np.complex128)
        for r in range(m):
            acc = 0.0 + 0.0j
            for c in range(m):
                acc += evecs[r, c] * np.exp(-1j * dt * evals[c]) * evecs[0, c]
            small[r] = acc
        err = abs(b * small[m - 1] * dt)
        if err < tol or b < 1e-14:
            out = np.zeros(n, np.complex128)
            for k in range(m):
                s_k = small[k]
                for r in range(n):
                    out[r] += s_k * basis[k][r]
            return out, m
        basis[j + 1] = w / b
    return v.copy(), -1


@njit(cache=True)
def cheby_expm(kp, ki, kv, tp, ti, tv, diag, ar, ai, v, coeffs, center, halfwidth):
    """Apply exp(-i dt H(phi)) to v via a Chebyshev series.

    ``coeffs`` already include the e^{-i dt center} prefactor; the series
    runs over Chebyshev polynomials of (H - center)/halfwidth.
    """
    n = v.shape[0]
    n_terms = coeffs.shape[0]
    t_prev = v.copy()
    out = coeffs[0] * t_prev
    if n_terms == 1:
        return out
    t_cur = np.zeros(n, np.complex128)
    _h_matvec(kp, ki, kv, tp, ti, tv, diag, ar, ai, t_prev, t_cur)
    for r in range(n):
        t_cur[r] = (t_cur[r] - center * t_prev[r]) / halfwidth
    out += coeffs[1] * t_cur
    scratch = np.zeros(n, np.complex128)
    for k in range(2, n_terms):
        _h_matvec(kp, ki, kv, tp, ti, tv, diag, ar, ai, t_cur, scratch)
        for r in range(n):
            t_new = 2.0 * (scratch[r] - center * t_cur[r]) / halfwidth - t_prev[r]
            t_prev[r] = t_cur[r]
            t_cur[r] = t_new
        out += coeffs[k] * t_cur
    return out
