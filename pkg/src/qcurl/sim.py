"""Dense statevector simulation.

A pure Q-qubit state is a 1-D complex128 array of length 2**Q; a batch of
states is a 2-D array of shape (n, 2**Q).  Qubit 0 is the least significant
bit of the amplitude index (little-endian).
"""

from __future__ import annotations

from dataclasses import dataclass
import zlib

import numpy as np

from . import kernels

__all__ = [
    "GateMatrix",
    "PAULI",
    "apply_gate",
    "apply_matrix",
    "basis_state",
    "expval_z",
    "fidelity",
    "haar_state",
    "haar_states",
    "num_qubits",
    "substream",
]

UNITARY_TOL = 1e-10

PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def num_qubits(state: np.ndarray) -> int:
    dim = state.shape[-1]
    q = dim.bit_length() - 1
    if dim < 2 or (1 << q) != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return q


def basis_state(Q: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(1 << Q, dtype=np.complex128)
    psi[index] = 1.0
    return psi


@dataclass(frozen=True)
class GateMatrix:
    """A 1- or 2-qubit unitary bound to target qubits.

    For two targets ``(a, b)`` the matrix acts on the local basis
    ``|b_a b_b>`` with ``a`` as the most significant local bit.
    """

    matrix: np.ndarray
    targets: tuple[int, ...]

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        k = len(self.targets)
        if k not in (1, 2):
            raise ValueError("only 1- and 2-qubit gates are supported")
        if m.shape != (1 << k, 1 << k):
            raise ValueError(f"matrix shape {m.shape} does not match {k} target(s)")
        if len(set(self.targets)) != k or min(self.targets) < 0:
            raise ValueError(f"invalid targets {self.targets}")
        if not np.allclose(m.conj().T @ m, np.eye(1 << k), atol=UNITARY_TOL, rtol=0):
            raise ValueError("gate matrix is not unitary")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))

    @property
    def adjoint(self) -> "GateMatrix":
        return GateMatrix(self.matrix.conj().T, self.targets)


def apply_matrix(states: np.ndarray, matrix: np.ndarray, targets) -> None:
    """Apply ``matrix`` in place to a (n, 2**Q) batch. No validation."""
    if len(targets) == 1:
        kernels.apply_1q(states, targets[0], matrix)
    else:
        kernels.apply_2q(states, targets[0], targets[1], matrix)


def apply_gate(state: np.ndarray, gate: GateMatrix) -> np.ndarray:
    """Return G|psi> for a single state or a batch; the input is not modified."""
    Q = num_qubits(state)
    if max(gate.targets) >= Q:
        raise IndexError(f"gate targets {gate.targets} out of range for {Q} qubits")
    out = np.array(state, dtype=np.complex128, copy=True, order="C")
    batch = out.reshape(-1, out.shape[-1])
    apply_matrix(batch, gate.matrix, gate.targets)
    return out


def fidelity(a: np.ndarray, b: np.ndarray) -> float | np.ndarray:
    """|<a|b>|^2, row-wise when given batches."""
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return np.abs(np.sum(a.conj() * b, axis=-1)) ** 2


def expval_z(state: np.ndarray, qubit: int) -> float | np.ndarray:
    Q = num_qubits(state)
    if not 0 <= qubit < Q:
        raise IndexError(f"qubit {qubit} out of range for {Q} qubits")
    dim = state.shape[-1]
    sign = 1.0 - 2.0 * ((np.arange(dim) >> qubit) & 1)
    return np.sum(np.abs(state) ** 2 * sign, axis=-1)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def haar_states(n: int, Q: int, rng: np.random.Generator, mode: str = "full") -> np.ndarray:
    """``n`` independent Haar-random states as an (n, 2**Q) array.

    ``mode="full"`` normalizes i.i.d. complex Gaussian vectors; ``"product"``
    draws Q independent single-qubit Haar states and takes their tensor product.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if mode == "full":
        g = rng.standard_normal((n, 1 << Q)) + 1j * rng.standard_normal((n, 1 << Q))
        return _normalize(g)
    if mode == "product":
        g = rng.standard_normal((n, Q, 2)) + 1j * rng.standard_normal((n, Q, 2))
        singles = _normalize(g)
        out = np.ones((n, 1), dtype=np.complex128)
        # qubit q becomes bit q: the newest factor is the most significant
        for q in range(Q):
            out = (singles[:, q, :, None] * out[:, None, :]).reshape(n, -1)
        return out
    raise ValueError(f"unknown Haar mode {mode!r}")


def haar_state(Q: int, rng: np.random.Generator, mode: str = "full") -> np.ndarray:
    return haar_states(1, Q, rng, mode)[0]


def substream(master_seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(master_seed, *keys)``.

    String keys are hashed with CRC32 so that named streams are stable across
    processes; integers are used as-is.
    """
    words = []
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode()))
        else:
            words.append(int(k))
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(words))
    return np.random.default_rng(ss)
