"""Training objectives on SASV scores.

Two components, each returning analytic gradients w.r.t. the scores:

  * binary cross-entropy against the positive = target-and-bonafide label,
  * a differentiable detection-cost surrogate in which the hard accept
    decision is replaced by a sigmoid of steepness alpha around a
    trainable threshold tau.

The combined loss is the convex mixture lambda_bce * BCE + (1 - lambda_bce) * soft-cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataio import LABELS


@dataclass(frozen=True)
class AdcfOperatingPoint:
    """Costs and class priors defining one detection-cost operating condition."""

    c_miss: float
    c_fa_non: float
    c_fa_spf: float
    pi_tar: float
    pi_non: float
    pi_spf: float

    def validate(self) -> None:
        for name in ("c_miss", "c_fa_non", "c_fa_spf"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if max(self.c_miss, self.c_fa_non, self.c_fa_spf) <= 0:
            raise ValueError("at least one cost must be strictly positive")
        for name in ("pi_tar", "pi_non", "pi_spf"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if abs(self.pi_tar + self.pi_non + self.pi_spf - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")

    def trivial_cost(self) -> float:
        """Best cost achievable by always rejecting or always accepting."""
        return min(
            self.c_miss * self.pi_tar,
            self.c_fa_non * self.pi_non + self.c_fa_spf * self.pi_spf,
        )


# Default operating point; deployment-specific and fully overridable.
ADCF_PRESETS = {
    "adcf-default": AdcfOperatingPoint(
        c_miss=1.0,
        c_fa_non=10.0,
        c_fa_spf=10.0,
        pi_tar=0.9405,
        pi_non=0.0095,
        pi_spf=0.05,
    ),
}


def adcf_preset(name: str) -> AdcfOperatingPoint:
    try:
        return ADCF_PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown a-DCF preset {name!r} (known: {sorted(ADCF_PRESETS)})"
        ) from None


@dataclass(frozen=True)
class LossConfig:
    lambda_bce: float = 0.5
    alpha: float = 10.0
    operating_point: AdcfOperatingPoint = field(
        default_factory=lambda: ADCF_PRESETS["adcf-default"]
    )

    def validate(self) -> None:
        if not 0.0 <= self.lambda_bce <= 1.0:
            raise ValueError("lambda_bce must lie in [0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        self.operating_point.validate()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x), stable for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def targets_from_labels(labels: Sequence[str]) -> np.ndarray:
    """Binary SASV targets: positive iff target speaker and bonafide."""
    for lab in labels:
        if lab not in LABELS:
            raise ValueError(f"unknown label {lab!r}")
    return np.array([1.0 if lab == "target" else 0.0 for lab in labels])


def bce_loss(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of sigmoid(score) against 0/1 targets.

    Returns (loss, dloss/dscore per trial).
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = scores.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if targets.shape != scores.shape:
        raise ValueError("scores and targets must have equal length")
    # -[y log s(x) + (1-y) log s(-x)] = softplus(x) - y*x
    loss = float(np.mean(_softplus(scores) - targets * scores))
    grad = (_sigmoid(scores) - targets) / n
    return loss, grad


def soft_adcf_loss(
    scores: np.ndarray,
    labels: Sequence[str],
    tau: float,
    cfg: LossConfig,
) -> tuple[float, np.ndarray, float]:
    """Sigmoid-relaxed detection cost at threshold tau.

    Miss rate is the mean of sigmoid(alpha (tau - s)) over target trials;
    each false-alarm rate is the mean of sigmoid(alpha (s - tau)) over its
    class. Classes absent from the batch contribute rate 0.

    Returns (loss, dloss/dscore per trial, dloss/dtau).
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if len(labels) != n:
        raise ValueError("scores and labels must have equal length")
    op = cfg.operating_point
    alpha = cfg.alpha

    for lab in labels:
        if lab not in LABELS:
            raise ValueError(f"unknown label {lab!r}")
    loss = 0.0
    grad = np.zeros(n)
    dtau = 0.0
    class_terms = (
        ("target", op.c_miss * op.pi_tar, +1.0),  # miss: sigmoid(alpha (tau - s))
        ("nontarget", op.c_fa_non * op.pi_non, -1.0),  # fa: sigmoid(alpha (s - tau))
        ("spoof", op.c_fa_spf * op.pi_spf, -1.0),
    )
    label_arr = np.array([str(lab) for lab in labels])
    for label, weight, sign in class_terms:
        mask = label_arr == label
        m = int(np.count_nonzero(mask))
        if m == 0:
            continue
        margin = sign * alpha * (tau - scores[mask])
        sig = _sigmoid(margin)
        loss += weight * float(np.mean(sig))
        dsig = sig * (1.0 - sig)
        grad[mask] = weight * dsig * (-sign * alpha) / m
        dtau += weight * float(np.sum(dsig)) * (sign * alpha) / m
    return loss, grad, dtau


def combined_loss(
    scores: np.ndarray,
    labels: Sequence[str],
    tau: float,
    cfg: LossConfig,
) -> tuple[float, np.ndarray, float]:
    """lambda_bce * BCE + (1 - lambda_bce) * soft cost, with matching gradients."""
    cfg.validate()
    lam = cfg.lambda_bce
    if lam == 1.0:
        loss, grad = bce_loss(scores, targets_from_labels(labels))
        return loss, grad, 0.0
    if lam == 0.0:
        return soft_adcf_loss(scores, labels, tau, cfg)
    bl, bg = bce_loss(scores, targets_from_labels(labels))
    al, ag, atau = soft_adcf_loss(scores, labels, tau, cfg)
    return lam * bl + (1.0 - lam) * al, lam * bg + (1.0 - lam) * ag, (1.0 - lam) * atau
