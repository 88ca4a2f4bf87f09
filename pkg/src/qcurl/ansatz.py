"""Parameterized circuits and the circuit families used in the experiments.

A :class:`Circuit` is an immutable list of :class:`GateSpec`.  Trainable gates
reference a parameter slot; several gates may share one slot.  Execution fuses
runs of consecutive gates acting on the same targets into one small matrix,
which keeps the shared-parameter QCNN layers (15 Pauli exponentials per
two-qubit block) cheap.

Rotation convention: ``R_A(theta) = exp(-i theta A / 2)``.  A ``pauli_exp``
gate is ``exp(-i theta P)`` for a Pauli string ``P`` over its targets, the
first letter acting on the first target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import product
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .sim import PAULI, apply_matrix, num_qubits, substream

__all__ = [
    "Circuit",
    "GateSpec",
    "TargetUnitary",
    "TWO_QUBIT_PAULIS",
    "build_hea",
    "build_qcnn",
    "build_xy_target",
    "circuit_unitary",
    "sqrt_iswap_matrix",
]

MAX_UNITARY_QUBITS = 6

FIXED_KINDS = ("hadamard", "cnot", "sqrt_iswap", "fixed_matrix")
PARAM_KINDS = ("rotation", "pauli_exp", "generator_exp")

TWO_QUBIT_PAULIS = tuple(a + b for a, b in product("IXYZ", repeat=2) if a + b != "II")
ONE_QUBIT_PAULIS = ("X", "Y", "Z")

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)


def sqrt_iswap_matrix() -> np.ndarray:
    """exp(i pi/8 (XX + YY)) in the basis |00>, |01>, |10>, |11>."""
    c = s = np.sqrt(0.5)
    return np.array(
        [[1, 0, 0, 0], [0, c, 1j * s, 0], [0, 1j * s, c, 0], [0, 0, 0, 1]],
        dtype=np.complex128,
    )


_SQRT_ISWAP = sqrt_iswap_matrix()
_EYE = {2: np.eye(2, dtype=np.complex128), 4: np.eye(4, dtype=np.complex128)}


@lru_cache(maxsize=None)
def pauli_string_matrix(letters: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for ch in letters:
        out = np.kron(out, PAULI[ch])
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GateSpec:
    kind: str
    targets: tuple[int, ...]
    param_slot: int | None = None
    param_scale: float = 1.0
    pauli: str | None = None  # rotation axis or Pauli string
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind in PARAM_KINDS:
            if self.param_slot is None:
                raise ValueError(f"{self.kind} gate needs a parameter slot")
        elif self.kind in FIXED_KINDS:
            if self.param_slot is not None:
                raise ValueError(f"{self.kind} gate cannot carry a parameter")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "rotation" and (self.pauli not in ONE_QUBIT_PAULIS or len(self.targets) != 1):
            raise ValueError("rotation needs one target and axis X, Y or Z")
        if self.kind == "pauli_exp":
            if not self.pauli or len(self.pauli) != len(self.targets) or set(self.pauli) - set("IXYZ"):
                raise ValueError(f"bad Pauli string {self.pauli!r} for targets {self.targets}")
        if self.kind in ("cnot", "sqrt_iswap") and len(self.targets) != 2:
            raise ValueError(f"{self.kind} needs two targets")
        if self.kind == "hadamard" and len(self.targets) != 1:
            raise ValueError("hadamard needs one target")
        if self.kind in ("fixed_matrix", "generator_exp"):
            if self.matrix is None:
                raise ValueError(f"{self.kind} needs a matrix")
            m = np.asarray(self.matrix, dtype=np.complex128)
            if m.shape != (1 << len(self.targets),) * 2:
                raise ValueError("matrix size does not match targets")
            object.__setattr__(self, "matrix", m)
        if len(set(self.targets)) != len(self.targets) or not 1 <= len(self.targets) <= 2:
            raise ValueError(f"invalid targets {self.targets}")

    @property
    def trainable(self) -> bool:
        return self.param_slot is not None

    def generator(self) -> tuple[float, np.ndarray]:
        """(s, P) with gate(theta) = exp(-i theta s P)."""
        if self.kind == "rotation":
            return 0.5 * self.param_scale, PAULI[self.pauli]
        if self.kind == "pauli_exp":
            return self.param_scale, pauli_string_matrix(self.pauli)
        if self.kind == "generator_exp":
            return self.param_scale, self.matrix
        raise ValueError(f"{self.kind} gate has no generator")

    def involutory(self) -> bool:
        if self.kind in ("rotation", "pauli_exp"):
            return True
        if self.kind == "generator_exp":
            g = self.matrix
            return np.allclose(g @ g, np.eye(g.shape[0]), atol=1e-12)
        return False

    def matrix_at(self, theta: float = 0.0) -> np.ndarray:
        if self.kind == "hadamard":
            return _H
        if self.kind == "cnot":
            return _CNOT
        if self.kind == "sqrt_iswap":
            return _SQRT_ISWAP
        if self.kind == "fixed_matrix":
            return self.matrix
        s, p = self.generator()
        a = s * theta
        if self.kind == "generator_exp":
            return expm(-1j * a * p)
        return np.cos(a) * _EYE[p.shape[0]] - 1j * np.sin(a) * p

    def to_line(self) -> str:
        name = self.kind if self.pauli is None else f"{self.kind}:{self.pauli}"
        slot = "-" if self.param_slot is None else str(self.param_slot)
        line = f"{name} {','.join(map(str, self.targets))} {slot} {self.param_scale!r}"
        if self.matrix is not None:
            line += " " + ",".join(repr(complex(z)) for z in self.matrix.ravel())
        return line

    @classmethod
    def from_line(cls, line: str) -> "GateSpec":
        parts = line.split()
        if len(parts) not in (4, 5):
            raise ValueError(f"malformed gate line: {line!r}")
        kind, _, pauli = parts[0].partition(":")
        targets = tuple(int(t) for t in parts[1].split(","))
        slot = None if parts[2] == "-" else int(parts[2])
        matrix = None
        if len(parts) == 5:
            vals = np.array([complex(z) for z in parts[4].split(",")])
            n = int(round(np.sqrt(vals.size)))
            matrix = vals.reshape(n, n)
        return cls(kind, targets, slot, float(parts[3]), pauli or None, matrix)


class FusedOp(NamedTuple):
    total: np.ndarray  # G_K ... G_1
    slots: np.ndarray  # parameter slot of each trainable gate
    derivs: np.ndarray | None  # d total / d theta_k, shape (k, dim, dim)


def _build_op(gates, idx, theta, derivatives) -> FusedOp:
    mats = [gates[i].matrix_at(theta[i]) for i in idx]
    total = mats[0]
    for m in mats[1:]:
        total = m @ total
    trainable = [k for k, i in enumerate(idx) if gates[i].trainable]
    slots = np.array([gates[idx[k]].param_slot for k in trainable], dtype=np.int64)
    derivs = None
    if derivatives and trainable:
        dim = total.shape[0]
        prefix = [_EYE[dim]]
        for m in mats[:-1]:
            prefix.append(m @ prefix[-1])
        suffix = [None] * len(mats)
        acc = _EYE[dim]
        for k in range(len(mats) - 1, -1, -1):
            suffix[k] = acc
            acc = acc @ mats[k]
        derivs = np.empty((len(trainable), dim, dim), dtype=np.complex128)
        for j, k in enumerate(trainable):
            s, p = gates[idx[k]].generator()
            derivs[j] = suffix[k] @ (-1j * s * (p @ mats[k])) @ prefix[k]
    return FusedOp(np.ascontiguousarray(total), slots, derivs)


def _fuse(gates) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    ops: list[tuple[tuple[int, ...], list[int]]] = []
    for i, g in enumerate(gates):
        if ops and ops[-1][0] == g.targets:
            ops[-1][1].append(i)
        else:
            ops.append((g.targets, [i]))
    return [(t, tuple(ix)) for t, ix in ops]


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[GateSpec, ...]
    param_count: int
    readout: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.targets) >= self.num_qubits:
                raise ValueError(f"gate targets {g.targets} exceed {self.num_qubits} qubits")
            if g.trainable and not 0 <= g.param_slot < self.param_count:
                raise ValueError(f"parameter slot {g.param_slot} out of range")
        if self.readout is not None and not 0 <= self.readout < self.num_qubits:
            raise ValueError("readout qubit out of range")

    @cached_property
    def ops(self):
        return _fuse(self.gates)

    @cached_property
    def _op_keys(self):
        # gates with identical kind/slot/scale/pauli give identical local matrices
        keys = []
        for _, idx in self.ops:
            keys.append(tuple(
                (self.gates[i].kind, self.gates[i].param_slot, self.gates[i].param_scale,
                 self.gates[i].pauli, id(self.gates[i].matrix))
                for i in idx
            ))
        return keys

    @cached_property
    def slot_gates(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.param_count)]
        for i, g in enumerate(self.gates):
            if g.trainable:
                out[g.param_slot].append(i)
        return out

    def check_params(self, params) -> np.ndarray:
        p = np.asarray(params, dtype=np.float64).ravel()
        if p.size != self.param_count:
            raise ValueError(f"expected {self.param_count} parameters, got {p.size}")
        return p

    def gate_angles(self, params, offsets=None) -> np.ndarray:
        p = self.check_params(params)
        theta = np.zeros(len(self.gates))
        for i, g in enumerate(self.gates):
            if g.trainable:
                theta[i] = p[g.param_slot]
        if offsets is not None:
            theta = theta + offsets
        return theta

    def compile(self, theta: np.ndarray, derivatives: bool = False) -> list["FusedOp"]:
        """One :class:`FusedOp` per run of same-target gates, at gate angles ``theta``.

        Ops with identical gate content and angles share one entry, so
        shared-parameter layers are only built once.
        """
        out = []
        cache: dict = {}
        for (targets, idx), key in zip(self.ops, self._op_keys):
            ck = (key, tuple(theta[i] for i in idx))
            entry = cache.get(ck)
            if entry is None:
                entry = _build_op(self.gates, idx, theta, derivatives)
                cache[ck] = entry
            out.append(entry)
        return out

    def run(self, states: np.ndarray, params, offsets=None) -> np.ndarray:
        """Apply the circuit to a single state or an (n, 2**Q) batch (copy)."""
        if num_qubits(states) != self.num_qubits:
            raise ValueError("state size does not match circuit")
        theta = self.gate_angles(params, offsets)
        out = np.array(states, dtype=np.complex128, copy=True, order="C")
        batch = out.reshape(-1, out.shape[-1])
        for (targets, _), op in zip(self.ops, self.compile(theta)):
            apply_matrix(batch, op.total, targets)
        return out

    def to_text(self) -> str:
        head = f"# qubits={self.num_qubits} params={self.param_count}"
        if self.readout is not None:
            head += f" readout={self.readout}"
        return "\n".join([head] + [g.to_line() for g in self.gates]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise ValueError("missing circuit header")
        meta = dict(kv.split("=") for kv in lines[0][1:].split())
        readout = int(meta["readout"]) if "readout" in meta else None
        gates = [GateSpec.from_line(ln) for ln in lines[1:]]
        return cls(int(meta["qubits"]), tuple(gates), int(meta["params"]), readout)


def circuit_unitary(circuit: Circuit, params) -> np.ndarray:
    """Full 2**Q x 2**Q matrix of the circuit (column j = U|j>)."""
    if circuit.num_qubits > MAX_UNITARY_QUBITS:
        raise ValueError(f"circuit_unitary limited to {MAX_UNITARY_QUBITS} qubits")
    dim = 1 << circuit.num_qubits
    return circuit.run(np.eye(dim, dtype=np.complex128), params).T


# ------------------------------------------------------------------ builders

def build_hea(Q: int, L_E: int) -> Circuit:
    """Hardware-efficient ansatz: rotation layer, then L_E x (CNOT chain, rotation layer).

    Each rotation block is RY(a) RZ(b), i.e. RZ acts first; 2Q(L_E + 1) parameters.
    """
    if Q < 2 or L_E < 0:
        raise ValueError("need Q >= 2 and L_E >= 0")
    gates = []
    slot = 0

    def rotation_layer():
        nonlocal slot
        for q in range(Q):
            gates.append(GateSpec("rotation", (q,), slot + 1, pauli="Z"))
            gates.append(GateSpec("rotation", (q,), slot, pauli="Y"))
            slot += 2

    rotation_layer()
    for _ in range(L_E):
        for q in range(Q - 1):
            gates.append(GateSpec("cnot", (q, q + 1)))
        rotation_layer()
    return Circuit(Q, tuple(gates), slot)


@dataclass(frozen=True)
class TargetUnitary:
    circuit: Circuit
    params: np.ndarray = field(repr=False)
    layer_count: int

    def apply(self, states: np.ndarray) -> np.ndarray:
        return self.circuit.run(states, self.params)

    def unitary(self) -> np.ndarray:
        return circuit_unitary(self.circuit, self.params)


def _xy_layers(Q: int, n_layers: int, slot0: int, gates: list) -> int:
    slot = slot0
    for _ in range(n_layers):
        for q in range(Q):
            gates.append(GateSpec("rotation", (q,), slot, pauli="Z"))
            slot += 1
        for j in range(Q - 1):
            gates.append(GateSpec("sqrt_iswap", (j, j + 1)))
    return slot


def build_xy_target(Q: int, L_m: int, L_F: int, beta_seed: int, fixed_seed: int) -> TargetUnitary:
    """XY-type target: L_m (RZ layer + sqrt-iSWAP chain) layers, then L_F fixed layers.

    Layer angles are uniform on [0, 2pi).  Row l of the angle table depends only
    on the seed and l, so targets with the same seeds form a prefix family.
    """
    if L_m < 1:
        raise ValueError("L_m must be >= 1")
    if Q < 2 or L_F < 0:
        raise ValueError("need Q >= 2 and L_F >= 0")
    betas = substream(beta_seed, "xy-beta").uniform(0.0, 2 * np.pi, size=(L_m, Q))
    fixed = substream(fixed_seed, "xy-fixed").uniform(0.0, 2 * np.pi, size=(L_F, Q))
    gates: list[GateSpec] = []
    n = _xy_layers(Q, L_m + L_F, 0, gates)
    circuit = Circuit(Q, tuple(gates), n)
    return TargetUnitary(circuit, np.concatenate([betas.ravel(), fixed.ravel()]), L_m)


def _two_qubit_block(a: int, b: int, slot0: int, gates: list) -> None:
    for j, p in enumerate(TWO_QUBIT_PAULIS):
        gates.append(GateSpec("pauli_exp", (a, b), slot0 + j, pauli=p))


def _qcnn_main(Q: int) -> Circuit:
    if Q < 2 or Q & (Q - 1):
        raise ValueError("main QCNN needs Q a power of two >= 2")
    gates: list[GateSpec] = []
    active = list(range(Q))
    slot = 0
    last_pair = None
    while len(active) > 1:
        # convolution: brick pattern of the stage's shared block
        for start in (0, 1):
            for i in range(start, len(active) - 1, 2):
                _two_qubit_block(active[i], active[i + 1], slot, gates)
        # pooling: same block on (discarded, kept) pairs, then drop the discarded qubit
        kept = []
        for i in range(0, len(active), 2):
            gone, keep = active[i], active[i + 1]
            _two_qubit_block(gone, keep, slot, gates)
            kept.append(keep)
            last_pair = (gone, keep)
        active = kept
        slot += 15
    _two_qubit_block(last_pair[0], last_pair[1], slot, gates)
    slot += 15
    out = active[0]
    gates.append(GateSpec("hadamard", (out,)))
    return Circuit(Q, tuple(gates), slot, readout=out)


def _qcnn_heatmap(Q: int, depth: int) -> Circuit:
    if Q < 2:
        raise ValueError("heatmap QCNN needs Q >= 2")
    gates: list[GateSpec] = []
    slot = 0
    pairs = [(k, (k + 1) % Q) for k in range(Q)] if Q > 2 else [(0, 1)]
    for _ in range(depth):
        for k in range(Q):
            for j, p in enumerate(ONE_QUBIT_PAULIS):
                gates.append(GateSpec("pauli_exp", (k,), slot + j, pauli=p))
        slot += 3
        for a, b in pairs:
            _two_qubit_block(a, b, slot, gates)
        slot += 15
    gates.append(GateSpec("hadamard", (Q - 1,)))
    return Circuit(Q, tuple(gates), slot, readout=Q - 1)


def build_qcnn(Q: int, variant: str = "main", depth: int = 5) -> Circuit:
    """QCNN read out as <Z> on ``circuit.readout`` after a final Hadamard.

    ``main``: per stage one shared 15-parameter two-qubit block used for a
    brick convolution and for pooling, halving the active qubits until one
    remains; then a 15-parameter fully connected block on the last pooled pair.
    ``heatmap``: ``depth`` x (shared single-qubit layer, 3 params; shared
    periodic two-qubit layer, 15 params).
    """
    if variant == "main":
        return _qcnn_main(Q)
    if variant == "heatmap":
        return _qcnn_heatmap(Q, depth)
    raise ValueError(f"unknown QCNN variant {variant!r}")
