"""Hot statevector kernels.

Every kernel exists twice: a numba ``@njit`` loop version and a pure-numpy
version with the same signature.  The module-level names (``apply_1q``,
``apply_2q``, ...) are bound at import time according to the ``QCURL_NUMBA``
environment variable (``0``/``false``/``off`` selects numpy).  Both variants
are always importable under ``*_numba`` / ``*_numpy`` so they can be checked
against each other and benchmarked.

``pauli_matvec`` applies sum_t c_t Z^{z_t} X^{x_t} given bit masks x_t, z_t.

Conventions: states are C-contiguous complex128 arrays of shape (n, 2**Q);
qubit 0 is the least significant bit of the amplitude index.  For two-qubit
kernels the 4x4 matrix acts on the local basis |b_qa b_qb>, i.e. the first
target qubit is the most significant local bit.
"""

from __future__ import annotations

import os

import numpy as np
from numba import njit

__all__ = [
    "BACKEND",
    "apply_1q",
    "apply_2q",
    "cross_1q",
    "cross_2q",
    "pauli_matvec",
]


def _numba_requested() -> bool:
    flag = os.environ.get("QCURL_NUMBA", "1").strip().lower()
    return flag not in {"0", "false", "off", "no"}


# ---------------------------------------------------------------- numpy path

def _view_1q(states, q):
    n, dim = states.shape
    return states.reshape(n, dim >> (q + 1), 2, 1 << q)


def _view_2q(states, hi, lo):
    n, dim = states.shape
    return states.reshape(n, dim >> (hi + 1), 2, 1 << (hi - lo - 1), 2, 1 << lo)


def _local_tensor(u, qa, qb):
    # reorder the 4x4 so that the higher qubit index is the first local bit
    u4 = np.asarray(u).reshape(2, 2, 2, 2)
    if qa > qb:
        return u4
    return u4.transpose(1, 0, 3, 2)


def apply_1q_numpy(states, q, u):
    v = _view_1q(states, q)
    a = v[:, :, 0, :].copy()
    b = v[:, :, 1, :].copy()
    v[:, :, 0, :] = u[0, 0] * a + u[0, 1] * b
    v[:, :, 1, :] = u[1, 0] * a + u[1, 1] * b


def apply_2q_numpy(states, qa, qb, u):
    hi, lo = max(qa, qb), min(qa, qb)
    v = _view_2q(states, hi, lo)
    t = _local_tensor(u, qa, qb)
    v[...] = np.einsum("ijkl,nhkmlo->nhimjo", t, v)


def cross_1q_numpy(lam, phi, q):
    lv = _view_1q(lam, q)
    pv = _view_1q(phi, q)
    return np.einsum("nhal,nhbl->ab", lv.conj(), pv)


def cross_2q_numpy(lam, phi, qa, qb):
    hi, lo = max(qa, qb), min(qa, qb)
    lv = _view_2q(lam, hi, lo)
    pv = _view_2q(phi, hi, lo)
    r = np.einsum("nhimjo,nhkmlo->ijkl", lv.conj(), pv)
    if qa < qb:
        r = r.transpose(1, 0, 3, 2)
    return r.reshape(4, 4)


def pauli_matvec_numpy(psi, coeffs, xmasks, zmasks):
    dim = psi.shape[0]
    idx = np.arange(dim)
    nbits = max(dim.bit_length() - 1, 1)
    out = np.zeros_like(psi)
    for c, x, z in zip(coeffs, xmasks, zmasks):
        masked = idx & z
        parity = np.zeros(dim, dtype=np.int64)
        for b in range(nbits):
            parity ^= (masked >> b) & 1
        out += c * (1 - 2 * parity) * psi[idx ^ x]
    return out


# ---------------------------------------------------------------- numba path

@njit(cache=True, nogil=True)
def apply_1q_numba(states, q, u):
    n, dim = states.shape
    step = 1 << q
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    for s in range(n):
        for base in range(0, dim, 2 * step):
            for off in range(step):
                i = base + off
                j = i + step
                a = states[s, i]
                b = states[s, j]
                states[s, i] = u00 * a + u01 * b
                states[s, j] = u10 * a + u11 * b


@njit(cache=True, nogil=True)
def apply_2q_numba(states, qa, qb, u):
    n, dim = states.shape
    ma = 1 << qa
    mb = 1 << qb
    for s in range(n):
        for i in range(dim):
            if (i & ma) != 0 or (i & mb) != 0:
                continue
            i01 = i | mb
            i10 = i | ma
            i11 = i | ma | mb
            v0 = states[s, i]
            v1 = states[s, i01]
            v2 = states[s, i10]
            v3 = states[s, i11]
            states[s, i] = u[0, 0] * v0 + u[0, 1] * v1 + u[0, 2] * v2 + u[0, 3] * v3
            states[s, i01] = u[1, 0] * v0 + u[1, 1] * v1 + u[1, 2] * v2 + u[1, 3] * v3
            states[s, i10] = u[2, 0] * v0 + u[2, 1] * v1 + u[2, 2] * v2 + u[2, 3] * v3
            states[s, i11] = u[3, 0] * v0 + u[3, 1] * v1 + u[3, 2] * v2 + u[3, 3] * v3


@njit(cache=True, nogil=True)
def cross_1q_numba(lam, phi, q):
    n, dim = lam.shape
    m = 1 << q
    r = np.zeros((2, 2), dtype=np.complex128)
    for s in range(n):
        for i in range(dim):
            if (i & m) != 0:
                continue
            j = i | m
            l0 = lam[s, i].conjugate()
            l1 = lam[s, j].conjugate()
            p0 = phi[s, i]
            p1 = phi[s, j]
            r[0, 0] += l0 * p0
            r[0, 1] += l0 * p1
            r[1, 0] += l1 * p0
            r[1, 1] += l1 * p1
    return r


@njit(cache=True, nogil=True)
def cross_2q_numba(lam, phi, qa, qb):
    n, dim = lam.shape
    ma = 1 << qa
    mb = 1 << qb
    r = np.zeros((4, 4), dtype=np.complex128)
    lv = np.empty(4, dtype=np.complex128)
    pv = np.empty(4, dtype=np.complex128)
    for s in range(n):
        for i in range(dim):
            if (i & ma) != 0 or (i & mb) != 0:
                continue
            idx = (i, i | mb, i | ma, i | ma | mb)
            for k in range(4):
                lv[k] = lam[s, idx[k]].conjugate()
                pv[k] = phi[s, idx[k]]
            for a in range(4):
                for b in range(4):
                    r[a, b] += lv[a] * pv[b]
    return r


@njit(cache=True, nogil=True)
def pauli_matvec_numba(psi, coeffs, xmasks, zmasks):
    dim = psi.shape[0]
    out = np.zeros_like(psi)
    for t in range(coeffs.shape[0]):
        c = coeffs[t]
        x = xmasks[t]
        z = zmasks[t]
        for i in range(dim):
            v = i & z
            parity = 0
            while v:
                parity ^= 1
                v &= v - 1
            if parity:
                out[i] -= c * psi[i ^ x]
            else:
                out[i] += c * psi[i ^ x]
    return out


USE_NUMBA = _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"

if USE_NUMBA:
    apply_1q = apply_1q_numba
    apply_2q = apply_2q_numba
    cross_1q = cross_1q_numba
    cross_2q = cross_2q_numba
    pauli_matvec = pauli_matvec_numba
else:
    apply_1q = apply_1q_numpy
    apply_2q = apply_2q_numpy
    cross_1q = cross_1q_numpy
    cross_2q = cross_2q_numpy
    pauli_matvec = pauli_matvec_numpy
