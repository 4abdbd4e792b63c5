"""Offline evaluation protocols: model comparison, hierarchy sweep, rate sweep.

Each experiment fits on the training split, scores the held-out test split,
and selects thresholds by stratified cross-validation over the test scores,
reporting metrics on the pooled out-of-fold predictions. Reports are emitted
as JSON documents or flat CSV tables.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datagen import LabeledDataset
from .evaluation import (
    MAX_F1,
    EvalReport,
    ThresholdPolicy,
    anomaly_rate_sweep,
    cv_threshold_evaluate,
)
from .features import build_matrix, fit_schema
from .forest import (
    IsolationForestConfig,
    RandomForestConfig,
    fit_iforest,
    fit_rf,
    predict_rf_batch,
    score_iforest_batch,
)
from .gnb import fit_gnb, score_gnb_many
from .records import HIERARCHY_LEVELS

MODEL_NAMES = ("gnb", "iforest", "rf")


def score_all_models(
    train: LabeledDataset,
    test: LabeledDataset,
    fit_level: str = "department",
    iforest_config: Optional[IsolationForestConfig] = None,
    rf_config: Optional[RandomForestConfig] = None,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Fit the three models on train and return their test-set scores."""
    schema = fit_schema(train.records)
    gnb = fit_gnb(train.records, schema, fit_level=fit_level)
    scores = {"gnb": score_gnb_many(gnb, test.records)}

    X_train = build_matrix(train.records, schema)
    X_test = build_matrix(test.records, schema)

    iforest = fit_iforest(X_train, iforest_config or IsolationForestConfig(seed=seed))
    scores["iforest"] = score_iforest_batch(iforest, X_test)

    rf = fit_rf(X_train, train.labels, rf_config or RandomForestConfig(seed=seed))
    scores["rf"] = predict_rf_batch(rf, X_test)
    return scores


def model_comparison(
    scores: dict[str, np.ndarray],
    labels: np.ndarray,
    k: int = 5,
    policy: ThresholdPolicy = MAX_F1,
    seed: int = 0,
) -> dict[str, EvalReport]:
    """Cross-validated thresholding of each model's test scores."""
    return {
        name: cv_threshold_evaluate(model_scores, labels, k=k, policy=policy, seed=seed)
        for name, model_scores in scores.items()
    }


def hierarchy_comparison(
    train: LabeledDataset,
    test: LabeledDataset,
    levels: Sequence[str] = HIERARCHY_LEVELS,
    k: int = 5,
    policy: ThresholdPolicy = MAX_F1,
    seed: int = 0,
) -> dict[str, EvalReport]:
    """Fit the density model at each hierarchy level and evaluate it."""
    schema = fit_schema(train.records)
    reports = {}
    for level in levels:
        model = fit_gnb(train.records, schema, fit_level=level)
        scores = score_gnb_many(model, test.records)
        reports[level] = cv_threshold_evaluate(scores, test.labels, k=k, policy=policy, seed=seed)
    return reports


def rate_sweep_comparison(
    scores: dict[str, np.ndarray],
    labels: np.ndarray,
    rates: Optional[Sequence[float]] = None,
    k: int = 5,
    policy: ThresholdPolicy = MAX_F1,
    seed: int = 0,
) -> dict[str, list[tuple[float, float]]]:
    """F score per anomaly rate for each model, on a shared undersampling."""
    return {
        name: anomaly_rate_sweep(model_scores, labels, rates=rates, k=k, policy=policy, seed=seed)
        for name, model_scores in scores.items()
    }


def reports_to_json(reports: dict[str, EvalReport], path: str | Path) -> None:
    doc = {name: report.to_dict() for name, report in reports.items()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def reports_to_csv(reports: dict[str, EvalReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["name", "precision", "recall", "f_beta", "auc_pr", "tp", "fp", "tn", "fn"])
        for name, r in reports.items():
            writer.writerow(
                [name, f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f_beta:.6f}",
                 f"{r.auc_pr:.6f}", r.tp, r.fp, r.tn, r.fn]
            )


def sweep_to_csv(sweeps: dict[str, list[tuple[float, float]]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["name", "rate", "f_score"])
        for name, points in sweeps.items():
            for rate, f_score in points:
                writer.writerow([name, f"{rate:.6f}", f"{f_score:.6f}"])
