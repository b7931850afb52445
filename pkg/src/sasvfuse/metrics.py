"""Exact detection metrics: hard a-DCF, min a-DCF sweep, EER, DET points.

Decisions are accept iff score > tau. Candidate thresholds are the
midpoints of consecutive distinct pooled scores plus one point below the
minimum and one above the maximum, which makes every sweep exact: every
achievable confusion outcome is visited exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import ScoreSet
from .losses import AdcfOperatingPoint


@dataclass(frozen=True)
class CurvePoint:
    tau: float
    p_miss: float
    p_fa_non: float
    p_fa_spf: float
    adcf: float


@dataclass(frozen=True)
class DetPoint:
    tau: float
    p_miss: float
    p_fa_non: float
    p_fa_spf: float


@dataclass
class SweepResult:
    min_adcf: float
    argmin_tau: float
    min_adcf_normalized: float
    curve: list[CurvePoint]


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints of consecutive distinct values, plus min-1 and max+1."""
    distinct = np.unique(np.asarray(values, dtype=np.float64))
    if distinct.size == 0:
        raise ValueError("no scores to sweep")
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([distinct[0] - 1.0], mids, [distinct[-1] + 1.0]))


def _class_scores(scores: ScoreSet) -> dict[str, np.ndarray]:
    if len(scores) == 0:
        raise ValueError("empty score set")
    return scores.by_label()


def _rates(
    groups: dict[str, np.ndarray], taus: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(p_miss, p_fa_non, p_fa_spf) at each tau; absent classes rate 0."""

    def miss_rate(arr):
        if arr is None or arr.size == 0:
            return np.zeros_like(taus)
        return np.searchsorted(np.sort(arr), taus, side="right") / arr.size

    def fa_rate(arr):
        if arr is None or arr.size == 0:
            return np.zeros_like(taus)
        return 1.0 - np.searchsorted(np.sort(arr), taus, side="right") / arr.size

    return (
        miss_rate(groups.get("target")),
        fa_rate(groups.get("nontarget")),
        fa_rate(groups.get("spoof")),
    )


def adcf_at_threshold(scores: ScoreSet, tau: float, op: AdcfOperatingPoint) -> float:
    """Hard detection cost at one threshold (accept iff score > tau)."""
    groups = _class_scores(scores)
    tar = groups.get("target")
    non = groups.get("nontarget")
    spf = groups.get("spoof")
    p_miss = float(np.mean(tar <= tau)) if tar is not None and tar.size else 0.0
    p_fa_non = float(np.mean(non > tau)) if non is not None and non.size else 0.0
    p_fa_spf = float(np.mean(spf > tau)) if spf is not None and spf.size else 0.0
    return (
        op.c_miss * op.pi_tar * p_miss
        + op.c_fa_non * op.pi_non * p_fa_non
        + op.c_fa_spf * op.pi_spf * p_fa_spf
    )


def min_adcf(scores: ScoreSet, op: AdcfOperatingPoint) -> SweepResult:
    """Exact minimum detection cost over all thresholds.

    Ties resolve to the smallest tau. The normalized value divides by the
    best trivial-decision cost (accept-all vs reject-all).
    """
    groups = _class_scores(scores)
    taus = candidate_thresholds(scores.scores())
    p_miss, p_fa_non, p_fa_spf = _rates(groups, taus)
    costs = (
        op.c_miss * op.pi_tar * p_miss
        + op.c_fa_non * op.pi_non * p_fa_non
        + op.c_fa_spf * op.pi_spf * p_fa_spf
    )
    best = int(np.argmin(costs))  # first minimum = smallest tau
    curve = [
        CurvePoint(float(t), float(pm), float(pn), float(ps), float(c))
        for t, pm, pn, ps, c in zip(taus, p_miss, p_fa_non, p_fa_spf, costs)
    ]
    trivial = op.trivial_cost()
    normalized = float(costs[best] / trivial) if trivial > 0 else float("inf")
    return SweepResult(
        min_adcf=float(costs[best]),
        argmin_tau=float(taus[best]),
        min_adcf_normalized=normalized,
        curve=curve,
    )


def det_points(scores: ScoreSet) -> list[DetPoint]:
    """Monotone error-rate staircase over the same candidate thresholds."""
    groups = _class_scores(scores)
    taus = candidate_thresholds(scores.scores())
    p_miss, p_fa_non, p_fa_spf = _rates(groups, taus)
    return [
        DetPoint(float(t), float(pm), float(pn), float(ps))
        for t, pm, pn, ps in zip(taus, p_miss, p_fa_non, p_fa_spf)
    ]


def eer(pos_scores, neg_scores) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps the candidate thresholds of the pooled scores and linearly
    interpolates between adjacent sweep points where the miss rate crosses
    the false-alarm rate.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg_scores, dtype=np.float64).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score lists must be non-empty")
    taus = candidate_thresholds(np.concatenate([pos, neg]))
    fnr = np.searchsorted(np.sort(pos), taus, side="right") / pos.size
    fpr = 1.0 - np.searchsorted(np.sort(neg), taus, side="right") / neg.size
    diff = fnr - fpr  # -1 at the low end, +1 at the high end
    idx = int(np.argmax(diff >= 0.0))
    if diff[idx] == 0.0:
        return float(fnr[idx]), float(taus[idx])
    u = -diff[idx - 1] / (diff[idx] - diff[idx - 1])
    value = fnr[idx - 1] + u * (fnr[idx] - fnr[idx - 1])
    threshold = taus[idx - 1] + u * (taus[idx] - taus[idx - 1])
    return float(value), float(threshold)


def eer_report(scores: ScoreSet) -> dict[str, float]:
    """SV (target vs nontarget), SPF (target vs spoof) and SASV
    (target vs pooled) equal error rates."""
    groups = _class_scores(scores)
    for label in ("target", "nontarget", "spoof"):
        if label not in groups:
            raise ValueError(f"score set has no {label!r} trials")
    tar, non, spf = groups["target"], groups["nontarget"], groups["spoof"]
    return {
        "sv_eer": eer(tar, non)[0],
        "spf_eer": eer(tar, spf)[0],
        "sasv_eer": eer(tar, np.concatenate([non, spf]))[0],
    }
