"""Quantum datasets: cluster-Ising ground states and the unitary-learning task family.

The cluster-Ising Hamiltonian

    H = - sum Z_i X_{i+1} Z_{i+2} - h1 sum X_i - h2 sum X_i X_{i+1}

is stored as a list of Pauli terms (coefficient, X bit mask, Z bit mask).  All
terms are products of X and Z on distinct qubits, so every matrix element is
real and the ground state can be taken real.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .ansatz import build_xy_target
from .curriculum import TaskDataset
from .sim import haar_states, num_qubits

__all__ = [
    "GroundState",
    "HamiltonianSpec",
    "LabeledState",
    "PauliSum",
    "TEST_H2",
    "analytic_label",
    "cluster_hamiltonian",
    "corrupt_labels",
    "ground_state",
    "lanczos",
    "load_dataset",
    "make_phase_dataset",
    "make_unitary_tasks",
    "save_dataset",
    "string_order",
    "string_order_label",
]

MAX_QUBITS = 10
DENSE_MAX_QUBITS = 6
DEGENERACY_GAP = 1e-10
RESIDUAL_TOL = 1e-9

TEST_H2 = (0.8439, 0.6636, 0.5033, 0.3631, 0.2229, 0.09766, -0.02755, -0.1377, -0.2479, -0.3531)
TRAIN_POINTS = 40
GRID_POINTS = 64
H1_RANGE = (0.0, 1.6)
H2_GRID_RANGE = (-1.6, 1.6)

_MAGIC = b"QCDS"
_HEADER = struct.Struct("<4sIIB")


@dataclass(frozen=True)
class HamiltonianSpec:
    Q: int
    h1: float
    h2: float
    boundary: str = "open"

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        min_q = 3 if self.boundary == "periodic" else 2
        if self.Q < min_q:
            raise ValueError(f"{self.boundary} chain needs Q >= {min_q}")
        if self.Q > MAX_QUBITS:
            raise ValueError(f"Q > {MAX_QUBITS} not supported")


@dataclass(frozen=True)
class PauliSum:
    """sum_t coeffs[t] Z^{zmasks[t]} X^{xmasks[t]} (X factors act first)."""

    Q: int
    coeffs: np.ndarray
    xmasks: np.ndarray
    zmasks: np.ndarray

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        return kernels.pauli_matvec(np.ascontiguousarray(psi), self.coeffs, self.xmasks, self.zmasks)

    def dense(self) -> np.ndarray:
        dim = 1 << self.Q
        idx = np.arange(dim)
        out = np.zeros((dim, dim))
        for c, x, z in zip(self.coeffs, self.xmasks, self.zmasks):
            # <i| Z^z X^x |j> is nonzero for j = i ^ x, with the Z sign taken on i
            out[idx, idx ^ x] += c * (1 - 2 * _parity(idx & z, self.Q))
        return out


def _parity(v: np.ndarray, nbits: int) -> np.ndarray:
    p = np.zeros_like(v)
    for b in range(nbits):
        p ^= (v >> b) & 1
    return p


def cluster_hamiltonian(spec: HamiltonianSpec) -> PauliSum:
    Q = spec.Q
    wrap = spec.boundary == "periodic"
    coeffs, xs, zs = [], [], []

    def add(c, xbits, zbits):
        coeffs.append(c)
        xs.append(sum(1 << (q % Q) for q in xbits))
        zs.append(sum(1 << (q % Q) for q in zbits))

    for i in range(Q if wrap else Q - 2):
        add(-1.0, [i + 1], [i, i + 2])
    if spec.h1 != 0.0:
        for i in range(Q):
            add(-spec.h1, [i], [])
    if spec.h2 != 0.0:
        for i in range(Q if wrap else Q - 1):
            add(-spec.h2, [i, i + 1], [])
    return PauliSum(
        Q,
        np.array(coeffs, dtype=np.float64),
        np.array(xs, dtype=np.int64),
        np.array(zs, dtype=np.int64),
    )


# ---------------------------------------------------------------- eigensolvers

def lanczos(matvec, dim: int, rng: np.random.Generator, *, krylov: int = 120,
            restarts: int = 20, deflate: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of a real symmetric operator, full reorthogonalization.

    Restarts from the current Ritz vector until the residual is below
    ``RESIDUAL_TOL``.  With ``deflate`` the search is confined to the
    orthogonal complement of those (orthonormal) vectors.
    """
    basis_out = np.zeros((0, dim)) if deflate is None else np.atleast_2d(deflate)

    def project(v):
        if len(basis_out):
            v = v - basis_out.T @ (basis_out @ v)
        return v

    m = min(krylov, dim - len(basis_out))
    v = project(rng.standard_normal(dim))
    v /= np.linalg.norm(v)
    energy, ritz = np.nan, v
    for _ in range(restarts + 1):
        V = np.zeros((m, dim))
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[0] = v
        k = m
        for j in range(m):
            w = project(matvec(V[j]))
            alpha[j] = V[j] @ w
            # full reorthogonalization, applied twice for stability
            w -= V[: j + 1].T @ (V[: j + 1] @ w)
            w -= V[: j + 1].T @ (V[: j + 1] @ w)
            w = project(w)
            if j + 1 == m:
                break
            b = np.linalg.norm(w)
            if b < 1e-12:
                k = j + 1
                break
            beta[j] = b
            V[j + 1] = w / b
        T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        energy = float(evals[0])
        ritz = evecs[:, 0] @ V[:k]
        ritz /= np.linalg.norm(ritz)
        res = np.linalg.norm(project(matvec(ritz)) - energy * ritz)
        if res <= RESIDUAL_TOL:
            break
        v = ritz
    return energy, ritz


@dataclass(frozen=True)
class GroundState:
    energy: float
    state: np.ndarray
    degenerate: bool
    gap: float


def _fix_sign(psi: np.ndarray) -> np.ndarray:
    mags = np.abs(psi)
    first = int(np.flatnonzero(mags > 1e-8 * mags.max())[0])
    return psi * (np.conj(psi[first]) / mags[first])


def ground_state(H: PauliSum, method: str = "auto", seed: int = 0) -> GroundState:
    """Lowest eigenpair; the first non-negligible amplitude is made positive real.

    ``method`` is ``dense`` (full diagonalization), ``lanczos`` or ``auto``
    (dense up to 6 qubits).  ``degenerate`` is set when the gap to the next
    level is below 1e-10.
    """
    if method == "auto":
        method = "dense" if H.Q <= DENSE_MAX_QUBITS else "lanczos"
    dim = 1 << H.Q
    if method == "dense":
        evals, evecs = np.linalg.eigh(H.dense())
        energy = float(evals[0])
        psi = evecs[:, 0]
        gap = float(evals[1] - evals[0]) if dim > 1 else np.inf
    elif method == "lanczos":
        rng = np.random.default_rng(seed)
        energy, psi = lanczos(H.matvec, dim, rng)
        e1, _ = lanczos(H.matvec, dim, rng, deflate=psi[None, :])
        gap = e1 - energy
    else:
        raise ValueError(f"unknown method {method!r}")
    psi = _fix_sign(psi.astype(np.complex128))
    return GroundState(energy, psi, gap < DEGENERACY_GAP, gap)


# ---------------------------------------------------------------- labels

def analytic_label(h1: float, h2: float) -> int:
    """Phase on the exactly solvable h2 = 0 line: SPT (1) for h1 < 1."""
    if h2 != 0:
        raise ValueError("analytic labels exist only for h2 = 0")
    return 1 if h1 < 1.0 else 0


def _string_ends(Q: int) -> tuple[int, int]:
    # Z_a X_{a+1} X_{a+3} ... X_{b-1} Z_b is a product of ZXZ stabilizers when b - a is even
    return 0, (Q - 1 if Q % 2 else Q - 2)


def string_order(state: np.ndarray) -> float:
    """<Z_a X_{a+1} X_{a+3} ... X_{b-1} Z_b> over the longest even span of the chain."""
    Q = num_qubits(state)
    if Q < 4:
        raise ValueError("string order needs Q >= 4")
    a, b = _string_ends(Q)
    op = PauliSum(
        Q,
        np.ones(1),
        np.array([sum(1 << q for q in range(a + 1, b, 2))], dtype=np.int64),
        np.array([(1 << a) | (1 << b)], dtype=np.int64),
    )
    psi = np.ascontiguousarray(state, dtype=np.complex128)
    return float(np.vdot(psi, op.matvec(psi)).real)


def string_order_label(state: np.ndarray, threshold: float = 0.5) -> int:
    return 1 if abs(string_order(state)) > threshold else 0


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True)
class LabeledState:
    state: np.ndarray
    label: int
    true_label: int
    params: tuple[float, float]


def corrupt_labels(data: list[LabeledState], p: float, rng: np.random.Generator) -> list[LabeledState]:
    """Flip each label independently with probability p; true labels are kept."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    flips = rng.random(len(data)) < p
    return [replace(d, label=1 - d.label) if f else d for d, f in zip(data, flips)]


def _grid(kind: str):
    h1 = np.linspace(*H1_RANGE, TRAIN_POINTS)
    if kind == "train":
        return [(a, 0.0) for a in h1]
    if kind == "test":
        return [(a, b) for b in TEST_H2 for a in h1]
    if kind == "heatmap_grid":
        g1 = np.linspace(*H1_RANGE, GRID_POINTS)
        g2 = np.linspace(*H2_GRID_RANGE, GRID_POINTS)
        return [(a, b) for b in g2 for a in g1]
    raise ValueError(f"unknown dataset kind {kind!r}")


def make_phase_dataset(kind: str, Q: int, boundary: str | None = None,
                       threshold: float = 0.5) -> list[LabeledState]:
    """Ground-state datasets.

    ``train``: 40 states on h2 = 0 with analytic labels.  ``test``: 40 h1
    values times 10 h2 values, labeled by string order.  ``heatmap_grid``:
    64 x 64 grid, labeled by string order too (the label is informational).
    The default boundary is open for train/test and periodic for the grid.
    """
    if Q > MAX_QUBITS:
        raise ValueError(f"Q > {MAX_QUBITS} not supported")
    if boundary is None:
        boundary = "periodic" if kind == "heatmap_grid" else "open"
    out = []
    for h1, h2 in _grid(kind):
        h1, h2 = float(h1), float(h2)
        gs = ground_state(cluster_hamiltonian(HamiltonianSpec(Q, h1, h2, boundary)))
        if kind == "train":
            y = analytic_label(h1, h2)
        else:
            y = string_order_label(gs.state, threshold)
        out.append(LabeledState(gs.state, y, y, (h1, h2)))
    return out


def make_unitary_tasks(Q: int, L_list, N: int, beta_seed: int, fixed_seed: int,
                       input_mode: str, rng: np.random.Generator, *,
                       L_F: int = 20, shared_inputs: bool = True) -> list[TaskDataset]:
    """One task per L_m: inputs |psi_j> and targets V^(m)|psi_j>.

    Task ids are 1, 2, ... in the order of ``L_list``.  With ``shared_inputs``
    every task uses the same N Haar inputs; otherwise each task draws fresh ones.
    """
    if Q > DENSE_MAX_QUBITS:
        raise ValueError(f"unitary tasks limited to {DENSE_MAX_QUBITS} qubits")
    if N < 1:
        raise ValueError("N must be >= 1")
    tasks = []
    common = haar_states(N, Q, rng, input_mode) if shared_inputs else None
    for tid, L_m in enumerate(L_list, start=1):
        target = build_xy_target(Q, int(L_m), L_F, beta_seed, fixed_seed)
        x = common if shared_inputs else haar_states(N, Q, rng, input_mode)
        tasks.append(TaskDataset(x, target.apply(x), tid, int(L_m)))
    return tasks


# ---------------------------------------------------------------- IO

def save_dataset(path, data: list[LabeledState], manifest=None) -> None:
    """Binary dump: header, little-endian (re, im) float64 amplitudes, label bytes.

    ``manifest`` optionally names a CSV with (index, h1, h2, label, true_label).
    """
    if not data:
        raise ValueError("empty dataset")
    Q = num_qubits(data[0].state)
    amps = np.stack([d.state for d in data]).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, Q, len(data), 1))
        fh.write(amps.tobytes())
        fh.write(bytes(d.label for d in data))
    if manifest is not None:
        with open(manifest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "h1", "h2", "label", "true_label"])
            for i, d in enumerate(data):
                w.writerow([i, repr(d.params[0]), repr(d.params[1]), d.label, d.true_label])


def load_dataset(path) -> tuple[np.ndarray, np.ndarray | None]:
    raw = Path(path).read_bytes()
    magic, Q, count, has_labels = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a dataset file")
    n_amp = count << Q
    start = _HEADER.size
    end = start + 16 * n_amp
    if len(raw) != end + (count if has_labels else 0):
        raise ValueError("truncated or oversized dataset file")
    states = np.frombuffer(raw[start:end], dtype="<c16").reshape(count, 1 << Q).astype(np.complex128)
    labels = np.frombuffer(raw[end:], dtype=np.uint8).astype(np.int64) if has_labels else None
    return states, labels
