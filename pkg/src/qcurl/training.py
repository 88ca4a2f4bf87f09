"""Losses, gradients and the full-batch Adam training loop.

Two gradient routes are provided.  :func:`adjoint_gradient` back-propagates a
co-state through the fused circuit ops (one forward and one backward sweep) and
is what :func:`train` uses.  :func:`parameter_shift_grad` evaluates the
two-term shift rule gate by gate and is kept as an independent check.  Both
return the exact derivative for gates exp(-i theta s P) with P^2 = I.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .ansatz import Circuit
from .dataloss import SuperLossConfig, sample_weights, update_eta, weighted_risk
from .sim import apply_matrix, expval_z

__all__ = [
    "AdamState",
    "ClassifierObjective",
    "LossValue",
    "ShiftGradient",
    "TrainRecord",
    "UnitaryObjective",
    "adam_step",
    "adjoint_gradient",
    "bce_loss",
    "empirical_unitary_loss",
    "hs_distance",
    "parameter_shift_grad",
    "train",
]

FD_STEP = 1e-5


def hs_distance(U: np.ndarray, V: np.ndarray) -> float:
    """1 - |Tr(V^dag U)|^2 / d^2."""
    U = np.asarray(U)
    V = np.asarray(V)
    if U.shape != V.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"shape mismatch: {U.shape} vs {V.shape}")
    d = U.shape[0]
    return float(1.0 - abs(np.vdot(V, U)) ** 2 / d**2)


class LossValue(NamedTuple):
    value: float
    per_sample: np.ndarray


# ---------------------------------------------------------------- objectives

@dataclass
class UnitaryObjective:
    """Per-sample loss 1 - |<target_j| U |input_j>|^2."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if len(self.inputs) == 0:
            raise ValueError("empty dataset")
        if self.inputs.shape != self.targets.shape:
            raise ValueError("inputs and targets differ in shape")

    def overlaps(self, out):
        return np.sum(self.targets.conj() * out, axis=-1)

    def measure(self, out):
        """Fidelities |<t|psi>|^2, linear in the output projector."""
        return np.abs(self.overlaps(out)) ** 2

    def losses(self, out):
        return 1.0 - self.measure(out)

    def dloss(self, values, coeffs):
        """d(sum_j c_j l_j) / d(value_j)."""
        return -np.asarray(coeffs, dtype=np.float64) * np.ones_like(values)

    def costate(self, out, coeffs):
        return -(coeffs * self.overlaps(out))[:, None] * self.targets

    def metrics(self, out):
        return {}


def bce_loss(q, y, mu: float = 1.0, label_map: str = "identity"):
    """Binary cross-entropy of sigmoid(mu q) against s(y).

    ``half_shift`` maps label 0 to 0.5 and label 1 to 1.0.
    """
    s = _soft_labels(y, label_map)
    z = mu * np.asarray(q, dtype=np.float64)
    out = np.logaddexp(0.0, z) - s * z
    return float(out) if out.ndim == 0 else out


def _soft_labels(y, label_map):
    y = np.asarray(y, dtype=np.float64)
    if label_map == "identity":
        return y
    if label_map == "half_shift":
        return np.where(y > 0.5, 1.0, 0.5)
    raise ValueError(f"unknown label map {label_map!r}")


@dataclass
class ClassifierObjective:
    """BCE on the readout <Z> of a QCNN-style circuit."""

    inputs: np.ndarray
    labels: np.ndarray
    readout: int
    mu: float = 1.0
    label_map: str = "identity"

    def __post_init__(self):
        if len(self.inputs) == 0:
            raise ValueError("empty dataset")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self._sign = 1.0 - 2.0 * ((np.arange(self.inputs.shape[-1]) >> self.readout) & 1)

    def outputs(self, out):
        return expval_z(out, self.readout)

    measure = outputs

    def dloss(self, values, coeffs):
        yhat = 1.0 / (1.0 + np.exp(-self.mu * np.asarray(values)))
        return coeffs * self.mu * (yhat - _soft_labels(self.labels, self.label_map))

    def losses(self, out):
        return bce_loss(self.outputs(out), self.labels, self.mu, self.label_map)

    def costate(self, out, coeffs):
        return self.dloss(self.outputs(out), coeffs)[:, None] * self._sign[None, :] * out

    def predict(self, q):
        yhat = 1.0 / (1.0 + np.exp(-self.mu * np.asarray(q)))
        threshold = 0.5 if self.label_map == "identity" else 0.75
        return (yhat >= threshold).astype(np.int64)

    def metrics(self, out):
        return {"accuracy": float(np.mean(self.predict(self.outputs(out)) == self.labels))}


def empirical_unitary_loss(circuit: Circuit, params, dataset) -> LossValue:
    obj = UnitaryObjective(np.asarray(dataset.inputs), np.asarray(dataset.targets))
    per = obj.losses(circuit.run(obj.inputs, params))
    return LossValue(float(per.mean()), per)


# ---------------------------------------------------------------- gradients

def adjoint_gradient(circuit: Circuit, params, inputs, costate: Callable, out=None) -> np.ndarray:
    """Gradient of L(psi_out) given lam = dL/d(psi_out^*) from ``costate(out)``.

    dL/dtheta = 2 Re <lam | d psi_out / dtheta>, accumulated per fused op from
    the local cross matrix R[a, b] = sum conj(lam[a, .]) phi[b, .].
    """
    theta = circuit.gate_angles(params)
    ops = circuit.compile(theta, derivatives=True)
    if out is None:
        out = circuit.run(inputs, params)
    phi = np.array(out, dtype=np.complex128, order="C").reshape(-1, out.shape[-1])
    lam = np.ascontiguousarray(costate(out), dtype=np.complex128).reshape(phi.shape)
    grad = np.zeros(circuit.param_count)
    for (targets, _), op in zip(reversed(circuit.ops), reversed(ops)):
        dag = np.ascontiguousarray(op.total.conj().T)
        apply_matrix(phi, dag, targets)
        if op.derivs is not None:
            if len(targets) == 1:
                R = kernels.cross_1q(lam, phi, targets[0])
            else:
                R = kernels.cross_2q(lam, phi, targets[0], targets[1])
            # sum_ab dM[a, b] R[a, b] for every trainable gate of the op
            vals = op.derivs.reshape(len(op.slots), -1) @ R.ravel()
            np.add.at(grad, op.slots, 2.0 * vals.real)
        apply_matrix(lam, dag, targets)
    return grad


class ShiftGradient(NamedTuple):
    grad: np.ndarray
    finite_difference: bool


def parameter_shift_grad(
    circuit: Circuit, params, inputs, measure: Callable, dloss: Callable | None = None
) -> ShiftGradient:
    """Gate-by-gate shift rule; shared slots sum the terms of all their gates.

    ``measure(out)`` must return expectation values that are linear in the
    output projector (fidelities, <Z>, ...).  For a gate exp(-i theta s P)
    with P^2 = I each value obeys
    dv/dtheta = s [v(theta + pi/(4s)) - v(theta - pi/(4s))].
    A nonlinear loss is handled by the chain rule: the returned gradient is
    ``dloss(v0) @ J`` where v0 are the unshifted values and J their Jacobian.
    Without ``dloss`` the values are summed.  Gates with non-involutory
    generators use central differences and set ``finite_difference``.
    """
    params = circuit.check_params(params)
    offsets = np.zeros(len(circuit.gates))
    v0 = np.asarray(measure(circuit.run(inputs, params)), dtype=np.float64)
    weight = np.ones_like(v0) if dloss is None else np.asarray(dloss(v0), dtype=np.float64)
    grad = np.zeros(circuit.param_count)
    used_fd = False

    def v(i, delta):
        offsets[i] = delta
        val = np.asarray(measure(circuit.run(inputs, params, offsets)), dtype=np.float64)
        offsets[i] = 0.0
        return val

    for slot, gate_ids in enumerate(circuit.slot_gates):
        for i in gate_ids:
            gate = circuit.gates[i]
            if gate.involutory():
                s, _ = gate.generator()
                shift = np.pi / (4.0 * s)
                dv = s * (v(i, shift) - v(i, -shift))
            else:
                used_fd = True
                dv = (v(i, FD_STEP) - v(i, -FD_STEP)) / (2.0 * FD_STEP)
            grad[slot] += float(np.sum(weight * dv))
    return ShiftGradient(grad, used_fd)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(state: AdamState, params, grad):
    """One bias-corrected Adam update; returns (new_state, new_params)."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (params.shape == grad.shape == state.m.shape):
        raise ValueError("parameter, gradient and moment lengths differ")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps), new


# ---------------------------------------------------------------- training

RECORD_COLUMNS = (
    "trial", "epoch", "train_loss", "weighted_loss", "test_loss", "test_accuracy", "eta",
    "w_mean", "w_min", "w_max",
)


@dataclass
class TrainRecord:
    train_loss: list = field(default_factory=list)
    weighted_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    test_accuracy: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    w_mean: list = field(default_factory=list)
    w_min: list = field(default_factory=list)
    w_max: list = field(default_factory=list)
    params: np.ndarray | None = None

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def rows(self, trial: int = 0):
        for e in range(self.epochs):
            yield (
                trial, e + 1, self.train_loss[e], self.weighted_loss[e], self.test_loss[e],
                self.test_accuracy[e], self.eta[e], self.w_mean[e], self.w_min[e], self.w_max[e],
            )


def train(
    circuit: Circuit,
    init_params,
    objective,
    epochs: int,
    *,
    lr: float = 0.001,
    superloss: SuperLossConfig | None = None,
    test: object | None = None,
    eval_every: int = 1,
) -> TrainRecord:
    """Full-batch Adam on ``objective``; ``superloss`` switches on sample weighting.

    Logged per epoch, after the update: unweighted train loss, the weighted
    loss used for the gradient, and test loss/accuracy (NaN on epochs skipped
    by ``eval_every``; the last epoch is always evaluated).  The threshold eta
    for epoch t is the mean unweighted loss of epoch t-1; for the first epoch
    it comes from the forward pass at the initial parameters.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    params = circuit.check_params(init_params).copy()
    state = AdamState.zeros(params.size, lr=lr)
    rec = TrainRecord()
    n = len(objective.inputs)
    out = circuit.run(objective.inputs, params)
    prev_losses = None
    for epoch in range(1, epochs + 1):
        losses = objective.losses(out)
        if superloss is None:
            coeffs = np.full(n, 1.0 / n)
            eta = np.nan
            weighted = float(losses.mean())
            w = np.zeros(n)
        else:
            eta = update_eta(losses if prev_losses is None else prev_losses, superloss)
            sw = sample_weights(losses, eta, superloss.gamma)
            w = sw.w
            coeffs = sw.factors / n
            weighted = weighted_risk(losses, sw, eta, superloss.gamma)
        grad = adjoint_gradient(
            circuit, params, objective.inputs, lambda o: objective.costate(o, coeffs), out=out
        )
        state, params = adam_step(state, params, grad)
        prev_losses = losses
        out = circuit.run(objective.inputs, params)
        rec.train_loss.append(float(objective.losses(out).mean()))
        rec.train_accuracy.append(objective.metrics(out).get("accuracy", np.nan))
        rec.weighted_loss.append(weighted)
        rec.eta.append(float(eta))
        rec.w_mean.append(float(w.mean()))
        rec.w_min.append(float(w.min()))
        rec.w_max.append(float(w.max()))
        if test is not None and (epoch % eval_every == 0 or epoch == epochs):
            tout = circuit.run(test.inputs, params)
            rec.test_loss.append(float(test.losses(tout).mean()))
            rec.test_accuracy.append(test.metrics(tout).get("accuracy", np.nan))
        else:
            rec.test_loss.append(np.nan)
            rec.test_accuracy.append(np.nan)
    rec.params = params
    return rec
