"""Metrics, threshold selection, and the cross-validated evaluation protocol.

Threshold selection sweeps every candidate cut of the score distribution
(midpoints between consecutive distinct scores plus infinite sentinels) and
maximizes the configured objective exactly. Ties in the objective are broken
toward the higher threshold, which favors precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


def f_beta(precision: float, recall: float, beta: float) -> float:
    """(1 + b^2) * p * r / (b^2 * p + r), defined as 0 when the denominator is 0."""
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


@dataclass(frozen=True)
class ThresholdPolicy:
    """Objective for threshold selection.

    kind "max_f_beta" maximizes the F_beta score; kind
    "max_recall_at_min_precision" maximizes recall among thresholds whose
    precision reaches min_precision, falling back to the highest-precision
    threshold (with a warning) when none qualifies.
    """

    kind: str = "max_f_beta"
    beta: float = 1.0
    min_precision: float = 0.8

    def __post_init__(self):
        if self.kind not in ("max_f_beta", "max_recall_at_min_precision"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if not (0.0 < self.min_precision <= 1.0):
            raise ValueError("min_precision must be in (0, 1]")


MAX_F1 = ThresholdPolicy(kind="max_f_beta", beta=1.0)


@dataclass
class ThresholdSelection:
    threshold: float
    objective: float
    precision: float
    recall: float
    warning: bool = False  # min-precision target was unattainable


def _candidate_cuts(scores: np.ndarray, labels: np.ndarray):
    """All candidate thresholds with confusion counts, highest threshold first.

    Returns (thresholds, tp, fp); index 0 is the empty cut at +inf, the last
    is -inf (flag everything). Predictions use strict score > threshold.
    """
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    change = np.flatnonzero(np.diff(s))
    cut_idx = np.concatenate((change, [s.size - 1]))
    tp = np.cumsum(l)[cut_idx].astype(np.float64)
    fp = (cut_idx + 1) - tp
    values = s[cut_idx]

    # Midpoint below each distinct value; the deepest cut keeps everything.
    mids = np.empty(values.size)
    mids[:-1] = (values[:-1] + values[1:]) / 2.0
    mids[-1] = -np.inf

    thresholds = np.concatenate(([np.inf], mids))
    tp = np.concatenate(([0.0], tp))
    fp = np.concatenate(([0.0], fp))
    return thresholds, tp, fp


def select_threshold(
    scores: np.ndarray,
    labels: np.ndarray,
    policy: ThresholdPolicy = MAX_F1,
) -> ThresholdSelection:
    """Exhaustive sweep over candidate thresholds, exact argmax of the policy."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.size == 0:
        raise ValueError("empty score vector")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("threshold selection needs at least one positive label")

    thresholds, tp, fp = _candidate_cuts(scores, labels)
    flagged = tp + fp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(flagged > 0, tp / flagged, 0.0)
    recall = tp / n_pos

    if policy.kind == "max_f_beta":
        b2 = policy.beta * policy.beta
        denom = b2 * precision + recall
        with np.errstate(invalid="ignore", divide="ignore"):
            objective = np.where(denom > 0, (1 + b2) * precision * recall / denom, 0.0)
        k = int(np.argmax(objective))  # first max = highest threshold
        return ThresholdSelection(
            threshold=float(thresholds[k]),
            objective=float(objective[k]),
            precision=float(precision[k]),
            recall=float(recall[k]),
        )

    eligible = precision >= policy.min_precision
    if eligible.any():
        best_recall = recall[eligible].max()
        k = int(np.flatnonzero(eligible & (recall == best_recall))[0])
        return ThresholdSelection(
            threshold=float(thresholds[k]),
            objective=float(recall[k]),
            precision=float(precision[k]),
            recall=float(recall[k]),
        )
    k = int(np.argmax(precision))
    return ThresholdSelection(
        threshold=float(thresholds[k]),
        objective=float(recall[k]),
        precision=float(precision[k]),
        recall=float(recall[k]),
        warning=True,
    )


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per sample: classes shuffled separately, dealt round-robin."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        folds[idx] = np.arange(idx.size) % k
    return folds


@dataclass
class EvalReport:
    precision: float
    recall: float
    f_beta: float
    auc_pr: float
    pr_points: list[tuple[float, float]]  # (recall, precision), ascending recall
    fold_thresholds: list[float]
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_beta": self.f_beta,
            "auc_pr": self.auc_pr,
            "fold_thresholds": self.fold_thresholds,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "pr_points": [[r, p] for r, p in self.pr_points],
        }


def cv_threshold_evaluate(
    scores: np.ndarray,
    labels: np.ndarray,
    k: int = 5,
    policy: ThresholdPolicy = MAX_F1,
    seed: int = 0,
) -> EvalReport:
    """Per-fold thresholds from the fold's complement, metrics on the union.

    Every sample is predicted exactly once, using a threshold selected without
    seeing it; the report aggregates those out-of-fold predictions.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("need at least 2 folds")
    n_pos = int(labels.sum())
    if n_pos < k:
        raise ValueError(f"{n_pos} positives cannot stratify {k} folds")

    folds = stratified_folds(labels, k, seed)
    preds = np.zeros(labels.size, dtype=bool)
    fold_thresholds = []
    for f in range(k):
        held_out = folds == f
        sel = select_threshold(scores[~held_out], labels[~held_out], policy)
        preds[held_out] = scores[held_out] > sel.threshold
        fold_thresholds.append(sel.threshold)

    tp = int((preds & (labels == 1)).sum())
    fp = int((preds & (labels == 0)).sum())
    fn = int((~preds & (labels == 1)).sum())
    tn = int((~preds & (labels == 0)).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / n_pos
    beta = policy.beta if policy.kind == "max_f_beta" else 1.0
    points, auc = pr_curve_auc(scores, labels)
    return EvalReport(
        precision=precision,
        recall=recall,
        f_beta=f_beta(precision, recall, beta),
        auc_pr=auc,
        pr_points=points,
        fold_thresholds=fold_thresholds,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


def pr_curve_auc(
    scores: np.ndarray, labels: np.ndarray
) -> tuple[list[tuple[float, float]], float]:
    """Precision/recall at every distinct score cut, with step-rule area.

    The area accumulates rectangles (recall step) x (precision at the cut),
    right-continuous, which never interpolates above achieved precision.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("PR curve needs at least one positive label")

    thresholds, tp, fp = _candidate_cuts(scores, labels)
    tp, fp = tp[1:], fp[1:]  # drop the empty cut
    precision = tp / (tp + fp)
    recall = tp / n_pos

    auc = float(np.sum(np.diff(np.concatenate(([0.0], recall))) * precision))
    points = [(float(r), float(p)) for r, p in zip(recall, precision)]
    return points, auc


def undersample_to_rate(
    labels: np.ndarray, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Indices keeping all positives and enough normals to hit the target rate."""
    labels = np.asarray(labels, dtype=np.int64)
    pos_idx = np.flatnonzero(labels == 1)
    neg_idx = np.flatnonzero(labels == 0)
    n_pos = pos_idx.size
    if n_pos == 0:
        raise ValueError("no positives to build a rated pool from")
    n_keep = round(n_pos * (1.0 - rate) / rate)
    if n_keep > neg_idx.size:
        attainable = n_pos / (n_pos + neg_idx.size)
        raise ValueError(
            f"rate {rate:.6f} unattainable with {neg_idx.size} normals; "
            f"rates must be >= {attainable:.6f}"
        )
    kept = rng.choice(neg_idx, size=n_keep, replace=False)
    return np.sort(np.concatenate((pos_idx, kept)))


def anomaly_rate_sweep(
    scores: np.ndarray,
    labels: np.ndarray,
    rates: Optional[Sequence[float]] = None,
    k: int = 5,
    policy: ThresholdPolicy = MAX_F1,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """F score as a function of the anomaly rate in an undersampled pool.

    For each rate, normals are undersampled before cross-validated
    thresholding; positives are always kept.
    """
    if rates is None:
        rates = np.logspace(np.log10(0.001), np.log10(0.25), 10)
    results = []
    for i, rate in enumerate(rates):
        rng = np.random.default_rng([seed, i])
        keep = undersample_to_rate(labels, float(rate), rng)
        report = cv_threshold_evaluate(scores[keep], labels[keep], k=k, policy=policy, seed=seed)
        results.append((float(rate), report.f_beta))
    return results


def rankdata(a: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    ranks[order] = np.arange(1, a.size + 1)
    _, inverse = np.unique(a, return_inverse=True)
    sums = np.bincount(inverse, weights=ranks)
    counts = np.bincount(inverse)
    return (sums / counts)[inverse]


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Rank correlation; 0.0 when either input is constant."""
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum()) / denom
