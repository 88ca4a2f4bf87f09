"""Confidence-aware sample weighting with a dynamic loss threshold.

Each sample loss l_i is rescaled to (l_i - eta) e^{w_i} + gamma w_i^2 where
w_i minimizes that expression for fixed l_i.  The minimizer has the closed
form w_i = -W0(max(-1/e, (l_i - eta) / (2 gamma))) with W0 the principal
Lambert-W branch.  gamma > 0 emphasizes low-loss ("easy") samples, gamma < 0
high-loss ("hard") samples; for gamma < 0 the same formula is used even though
the inner problem is then unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SampleWeights",
    "SuperLossConfig",
    "lambert_w0",
    "sample_weight",
    "sample_weights",
    "update_eta",
    "weighted_risk",
]

BRANCH_POINT = -np.exp(-1.0)
DOMAIN_SLACK = 1e-12
_MAX_ITER = 60


def _initial_guess(z: np.ndarray) -> np.ndarray:
    w = np.empty_like(z)
    near = z < -0.25
    large = z > 3.0
    mid = ~(near | large)
    # branch-point series in p = sqrt(2(ez + 1))
    p = np.sqrt(np.maximum(2.0 * (np.e * z[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p**2 / 3.0 + 11.0 / 72.0 * p**3
    l1 = np.log1p(z[mid])
    w[mid] = l1 * (1.0 - np.log1p(l1) / (2.0 + l1))
    a = np.log(z[large])
    b = np.log(a)
    w[large] = a - b + b / a
    return w


def lambert_w0(z):
    """Principal branch W0 for real z >= -1/e, via Halley iteration.

    Inputs below the branch point by at most 1e-12 are clamped onto it.
    """
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr < BRANCH_POINT - DOMAIN_SLACK) or np.any(np.isnan(arr)):
        raise ValueError("lambert_w0 is defined for z >= -1/e")
    zz = np.maximum(arr, BRANCH_POINT).ravel()
    w = _initial_guess(zz)
    at_branch = zz == BRANCH_POINT
    w[at_branch] = -1.0
    w[zz == 0.0] = 0.0
    active = ~(at_branch | (zz == 0.0))
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - zz[active]
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(denom != 0.0, f / denom, 0.0)
        w_new = wa - step
        done = np.abs(step) <= 4e-16 * (1.0 + np.abs(w_new))
        w[active] = w_new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    w = np.maximum(w, -1.0)
    out = w.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SuperLossConfig:
    gamma: float = 1.0
    eta_init: float = 0.0
    eta_mode: str = "previous_epoch_mean"

    def __post_init__(self):
        if self.gamma == 0:
            raise ValueError("gamma must be nonzero")
        if self.eta_mode not in ("fixed", "previous_epoch_mean"):
            raise ValueError(f"unknown eta mode {self.eta_mode!r}")

    @property
    def mode(self) -> str:
        return "easy" if self.gamma > 0 else "hard"


@dataclass(frozen=True)
class SampleWeights:
    w: np.ndarray
    eta_used: float

    @property
    def factors(self) -> np.ndarray:
        return np.exp(self.w)


def sample_weight(l, eta: float, gamma: float):
    """w = -W0(max(-1/e, (l - eta) / (2 gamma))); scalar or array."""
    if gamma == 0:
        raise ValueError("gamma must be nonzero")
    z = np.maximum(BRANCH_POINT, (np.asarray(l, dtype=np.float64) - eta) / (2.0 * gamma))
    w = -np.asarray(lambert_w0(z))
    return float(w) if w.ndim == 0 else w


def sample_weights(losses, eta: float, gamma: float) -> SampleWeights:
    return SampleWeights(np.atleast_1d(sample_weight(losses, eta, gamma)), float(eta))


def weighted_risk(per_sample, weights, eta: float, gamma: float) -> float:
    """mean_i (l_i - eta) e^{w_i} + gamma w_i^2."""
    l = np.asarray(per_sample, dtype=np.float64)
    w = np.asarray(weights.w if isinstance(weights, SampleWeights) else weights, dtype=np.float64)
    if l.shape != w.shape:
        raise ValueError(f"length mismatch: {l.shape} vs {w.shape}")
    return float(np.mean((l - eta) * np.exp(w) + gamma * w**2))


def update_eta(previous_losses, cfg: SuperLossConfig) -> float:
    if cfg.eta_mode == "fixed":
        return float(cfg.eta_init)
    return float(np.mean(previous_losses))
