import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcurl import kernels
from conftest import kron_op, kron_two_qubit, random_unitary


def _batch(seed, n, Q):
    r = np.random.default_rng(seed)
    return r.standard_normal((n, 1 << Q)) + 1j * r.standard_normal((n, 1 << Q))


@given(seed=st.integers(0, 10**6), Q=st.integers(1, 5), n=st.integers(1, 3), data=st.data())
def test_apply_1q_backends_agree_with_kronecker(seed, Q, n, data):
    q = data.draw(st.integers(0, Q - 1))
    u = random_unitary(2, np.random.default_rng(seed + 1))
    psi = _batch(seed, n, Q)
    a, b = psi.copy(), psi.copy()
    kernels.apply_1q_numba(a, q, u)
    kernels.apply_1q_numpy(b, q, u)
    oracle = psi @ kron_op(Q, {q: u}).T
    assert np.allclose(a, oracle, atol=1e-12)
    assert np.allclose(b, oracle, atol=1e-12)


@given(seed=st.integers(0, 10**6), Q=st.integers(2, 5), n=st.integers(1, 3), data=st.data())
def test_apply_2q_backends_agree_with_kronecker(seed, Q, n, data):
    qa, qb = data.draw(st.lists(st.integers(0, Q - 1), min_size=2, max_size=2, unique=True))
    u = random_unitary(4, np.random.default_rng(seed + 1))
    psi = _batch(seed, n, Q)
    a, b = psi.copy(), psi.copy()
    kernels.apply_2q_numba(a, qa, qb, u)
    kernels.apply_2q_numpy(b, qa, qb, u)
    oracle = psi @ kron_two_qubit(Q, u, qa, qb).T
    assert np.allclose(a, oracle, atol=1e-12)
    assert np.allclose(b, oracle, atol=1e-12)


@given(seed=st.integers(0, 10**6), Q=st.integers(2, 5), data=st.data())
def test_cross_kernels_agree(seed, Q, data):
    qa, qb = data.draw(st.lists(st.integers(0, Q - 1), min_size=2, max_size=2, unique=True))
    lam, phi = _batch(seed, 3, Q), _batch(seed + 7, 3, Q)
    assert np.allclose(kernels.cross_1q_numba(lam, phi, qa), kernels.cross_1q_numpy(lam, phi, qa))
    r_nb = kernels.cross_2q_numba(lam, phi, qa, qb)
    assert np.allclose(r_nb, kernels.cross_2q_numpy(lam, phi, qa, qb))
    # R[a, b] = sum conj(lam_a) phi_b, i.e. <lam| E_ab |phi> for the local matrix unit E_ab
    for a in range(4):
        for b in range(4):
            E = np.zeros((4, 4))
            E[a, b] = 1.0
            full = kron_two_qubit(Q, E, qa, qb)
            expect = np.sum(lam.conj() * (phi @ full.T))
            assert abs(r_nb[a, b] - expect) < 1e-10


@given(seed=st.integers(0, 10**6), Q=st.integers(1, 5))
def test_pauli_matvec_agrees(seed, Q):
    r = np.random.default_rng(seed)
    k = 4
    coeffs = r.standard_normal(k)
    xm = r.integers(0, 1 << Q, k)
    zm = r.integers(0, 1 << Q, k)
    psi = _batch(seed, 1, Q)[0]
    a = kernels.pauli_matvec_numba(psi, coeffs, xm, zm)
    b = kernels.pauli_matvec_numpy(psi, coeffs, xm, zm)
    X = np.array([[0, 1], [1, 0]])
    Z = np.diag([1.0, -1.0])
    full = np.zeros((1 << Q, 1 << Q), dtype=np.complex128)
    for c, x, z in zip(coeffs, xm, zm):
        # Z^z X^x: the X factors act first, the sign is read on the output index
        full += c * kron_op(Q, {q: Z for q in range(Q) if z >> q & 1}) @ kron_op(
            Q, {q: X for q in range(Q) if x >> q & 1}
        )
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a, full @ psi, atol=1e-12)


def test_backend_flag_selects_numpy(monkeypatch):
    import importlib

    monkeypatch.setenv("QCURL_NUMBA", "0")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "numpy"
        assert mod.apply_2q is mod.apply_2q_numpy
    finally:
        monkeypatch.delenv("QCURL_NUMBA")
        importlib.reload(kernels)
