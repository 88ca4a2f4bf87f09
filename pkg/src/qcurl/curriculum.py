"""Task-based curriculum: density-ratio weights between tasks and the greedy order.

For a main task M and an auxiliary task m the ratio p_M / p_m of their joint
input/output distributions is modeled as r(x, y) = alpha . phi(x, y) with the
product fidelity kernel phi_l(x, y) = |<x|x_l>|^2 |<y|y_l>|^2 over the main
task's samples.  alpha minimizes the regularized least-squares fit

    1/2 alpha^T H alpha - h^T alpha + lambda/2 |alpha|^2,

H built from auxiliary samples and h from main samples, and the curriculum
weight c_{M,m} is the mean fitted ratio over the auxiliary samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .ansatz import Circuit
from .training import TrainRecord, UnitaryObjective, train

__all__ = [
    "RatioModel",
    "TaskDataset",
    "basis_matrix",
    "curriculum_weight",
    "fit_ratio",
    "greedy_order",
    "greedy_order_from_weights",
    "kernel_basis",
    "random_order",
    "run_qcurl_game",
    "weight_matrix",
    "write_weight_matrix",
]

DEFAULT_LAMBDA = 1e-3


@dataclass(frozen=True)
class TaskDataset:
    inputs: np.ndarray
    targets: np.ndarray
    task_id: int
    layer_count: int = 0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.complex128))
        y = np.atleast_2d(np.asarray(self.targets, dtype=np.complex128))
        if x.shape != y.shape:
            raise ValueError(f"inputs {x.shape} and targets {y.shape} differ")
        if len(x) == 0:
            raise ValueError("empty task dataset")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def basis_matrix(xs: np.ndarray, ys: np.ndarray, anchors: TaskDataset) -> np.ndarray:
    """Rows phi(x_i, y_i) for a batch of pairs, shape (n, N_anchors)."""
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    if xs.shape[1] != anchors.dim or ys.shape[1] != anchors.dim:
        raise ValueError("state dimension does not match the anchors")
    fx = np.abs(xs @ anchors.inputs.conj().T) ** 2
    fy = np.abs(ys @ anchors.targets.conj().T) ** 2
    return fx * fy


def kernel_basis(x: np.ndarray, y: np.ndarray, main: TaskDataset) -> np.ndarray:
    """phi_l(x, y) = |<x|x_l>|^2 |<y|y_l>|^2 for every main-task pair l."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("kernel_basis takes single states; use basis_matrix for batches")
    return basis_matrix(x[None, :], y[None, :], main)[0]


@dataclass(frozen=True)
class RatioModel:
    alpha: np.ndarray
    anchors: TaskDataset
    lam: float

    def __call__(self, xs, ys) -> np.ndarray:
        return basis_matrix(xs, ys, self.anchors) @ self.alpha


def _ldl_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A via A = L D L^T.

    No pivoting is needed for SPD input, and unlike Cholesky there is no square
    root, so a 1x1 system reduces to the single division b / A.
    """
    n = len(b)
    L = np.eye(n)
    d = np.empty(n)
    for j in range(n):
        ld = L[j, :j] * d[:j]
        d[j] = A[j, j] - L[j, :j] @ ld
        if not d[j] > 0:
            raise AssertionError("H + lambda I is not positive definite")
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ ld) / d[j]
    z = solve_triangular(L, b, lower=True, unit_diagonal=True)
    return solve_triangular(L.T, z / d, lower=False, unit_diagonal=True)


def fit_ratio(main: TaskDataset, aux: TaskDataset, lam: float = DEFAULT_LAMBDA) -> RatioModel:
    """Solve (H + lam I) alpha = h with an LDL^T factorization."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    P_aux = basis_matrix(aux.inputs, aux.targets, main)
    P_main = basis_matrix(main.inputs, main.targets, main)
    H = P_aux.T @ P_aux / len(aux)
    h = P_main.mean(axis=0)
    alpha = _ldl_solve(H + lam * np.eye(len(main)), h)
    if not np.all(np.isfinite(alpha)):
        raise AssertionError("non-finite ratio coefficients")
    return RatioModel(alpha, main, float(lam))


def curriculum_weight(model: RatioModel, aux: TaskDataset) -> float:
    """Mean fitted ratio over the auxiliary samples; may be negative."""
    return float(np.mean(model(aux.inputs, aux.targets)))


def weight_matrix(tasks: Sequence[TaskDataset], lam: float = DEFAULT_LAMBDA) -> dict:
    """c[(a, b)] for every ordered pair of distinct task ids."""
    out = {}
    for main in tasks:
        for aux in tasks:
            if aux.task_id != main.task_id:
                out[main.task_id, aux.task_id] = curriculum_weight(fit_ratio(main, aux, lam), aux)
    return out


def write_weight_matrix(path, weights: dict, task_ids: Sequence[int]) -> None:
    """CSV with one row per main task and one column per auxiliary task (diagonal empty)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["main"] + [str(t) for t in task_ids])
        for a in task_ids:
            w.writerow([a] + ["" if a == b else repr(float(weights[a, b])) for b in task_ids])


def greedy_order_from_weights(task_ids: Sequence[int], main_id: int, weights) -> list[int]:
    """Walk back from the main task, each time prepending the remaining task with the
    largest weight c[current, candidate]; ties go to the lowest id.

    ``weights`` is a mapping (current, candidate) -> c or a callable of the pair.
    """
    if main_id not in task_ids:
        raise ValueError(f"main task {main_id} not among the tasks")
    get = weights if callable(weights) else (lambda a, b: weights[a, b])
    remaining = sorted(t for t in task_ids if t != main_id)
    order = [main_id]
    current = main_id
    while remaining:
        best = max(remaining, key=lambda t: (get(current, t), -t))
        remaining.remove(best)
        order.insert(0, best)
        current = best
    return order


def greedy_order(tasks: Sequence[TaskDataset], main_id: int, lam: float = DEFAULT_LAMBDA) -> list[int]:
    by_id = {t.task_id: t for t in tasks}
    if len(by_id) != len(tasks):
        raise ValueError("duplicate task ids")

    def c(a, b):
        return curriculum_weight(fit_ratio(by_id[a], by_id[b], lam), by_id[b])

    return greedy_order_from_weights(list(by_id), main_id, c)


def random_order(task_ids: Sequence[int], main_id: int, rng: np.random.Generator) -> list[int]:
    """Uniform permutation of the auxiliary tasks, main task last."""
    aux = np.array(sorted(t for t in task_ids if t != main_id), dtype=np.int64)
    return [int(t) for t in rng.permutation(aux)] + [main_id]


def run_qcurl_game(
    tasks: Sequence[TaskDataset],
    order: Sequence[int],
    circuit: Circuit,
    init_params,
    epochs_per_task: int,
    *,
    lr: float = 0.001,
    test: UnitaryObjective | None = None,
) -> list[TrainRecord]:
    """Train the tasks one after another; only the parameters carry over.

    ``test`` is evaluated during training on the last (main) task only.
    """
    by_id = {t.task_id: t for t in tasks}
    if not order:
        raise ValueError("empty order")
    params = np.asarray(init_params, dtype=np.float64)
    records = []
    for k, tid in enumerate(order):
        task = by_id[tid]
        last = k == len(order) - 1
        rec = train(
            circuit, params, UnitaryObjective(task.inputs, task.targets), epochs_per_task,
            lr=lr, test=test if last else None,
        )
        params = rec.params
        records.append(rec)
    return records
