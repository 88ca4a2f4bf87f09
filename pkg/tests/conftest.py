import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def kron_op(Q, ops):
    """Full 2^Q matrix of single-qubit factors {qubit: 2x2}, little-endian."""
    out = np.ones((1, 1), dtype=np.complex128)
    for q in reversed(range(Q)):
        out = np.kron(out, ops.get(q, np.eye(2)))
    return out


def kron_two_qubit(Q, u, qa, qb):
    """Full matrix of a 4x4 gate on (qa, qb), qa the most significant local bit, by enumeration."""
    dim = 1 << Q
    full = np.zeros((dim, dim), dtype=np.complex128)
    for j in range(dim):
        ba, bb = (j >> qa) & 1, (j >> qb) & 1
        col = 2 * ba + bb
        for row in range(4):
            i = j & ~((1 << qa) | (1 << qb))
            i |= ((row >> 1) & 1) << qa
            i |= (row & 1) << qb
            full[i, j] += u[row, col]
    return full


def random_unitary(n, rng):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
