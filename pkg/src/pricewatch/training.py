"""End-to-end bundle training: fit schema and models, select thresholds, version.

The density model gets an F(beta=0.1) threshold (precision-heavy, it runs in
the blocking path), the random forest a recall-maximizing threshold at 80%
minimum precision. Thresholds are selected on a stratified validation slice
of the training data. Without any positive labels the supervised forest is
skipped and the unsupervised thresholds fall back to a score quantile, which
is how a fresh deployment bootstraps before reviews produce labels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bundle import ModelBundle
from .datagen import LabeledDataset
from .evaluation import ThresholdPolicy, select_threshold, stratified_folds
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
from .impact import DEFAULT_TIER_BOUNDS
from .records import ItemRecord

GNB_POLICY = ThresholdPolicy(kind="max_f_beta", beta=0.1)
RF_POLICY = ThresholdPolicy(kind="max_recall_at_min_precision", min_precision=0.8)
IFOREST_POLICY = ThresholdPolicy(kind="max_f_beta", beta=1.0)


@dataclass
class TrainConfig:
    fit_level: str = "department"
    seed: int = 0
    validation_fraction: float = 0.25
    fit_iforest: bool = True
    fit_rf: bool = True
    iforest: IsolationForestConfig = field(default_factory=IsolationForestConfig)
    rf: RandomForestConfig = field(default_factory=RandomForestConfig)
    tier_bounds: tuple[float, ...] = DEFAULT_TIER_BOUNDS
    # threshold used when no labels exist: flag the top quantile of scores
    cold_start_flag_rate: float = 0.001


def train_bundle(
    records: Sequence[ItemRecord],
    labels: np.ndarray,
    version: str,
    config: Optional[TrainConfig] = None,
    created_at: Optional[float] = None,
) -> ModelBundle:
    """Fit every model on the full training set and pick thresholds on a slice."""
    config = config or TrainConfig()
    labels = np.asarray(labels, dtype=np.int64)
    if len(records) != labels.size:
        raise ValueError("records and labels length mismatch")

    schema = fit_schema(records)
    gnb = fit_gnb(records, schema, fit_level=config.fit_level)

    X = None
    iforest = None
    rf = None
    if config.fit_iforest or config.fit_rf:
        X = build_matrix(records, schema)
    if config.fit_iforest:
        iforest = fit_iforest(X, config.iforest)
    has_both_classes = 0 < int(labels.sum()) < labels.size
    if config.fit_rf and has_both_classes:
        rf = fit_rf(X, labels, config.rf)

    # Validation slice for threshold selection: one stratified fold.
    k = max(2, round(1.0 / config.validation_fraction))
    folds = stratified_folds(labels, k=k, seed=config.seed)
    val = folds == 0
    val_records = [r for r, keep in zip(records, val) if keep]
    val_labels = labels[val]
    threshold_info: dict = {"validation_rows": int(val.sum())}

    gnb_scores = score_gnb_many(gnb, val_records)
    if val_labels.sum() > 0:
        sel = select_threshold(gnb_scores, val_labels, GNB_POLICY)
        gnb.set_epsilon(sel.threshold)
        threshold_info["gnb"] = {
            "policy": "max_f_beta(0.1)",
            "epsilon": sel.threshold,
            "precision": sel.precision,
            "recall": sel.recall,
        }
    else:
        epsilon = float(np.quantile(gnb_scores, 1.0 - config.cold_start_flag_rate))
        gnb.set_epsilon(epsilon)
        threshold_info["gnb"] = {"policy": "cold_start_quantile", "epsilon": epsilon}

    if iforest is not None:
        if_scores = score_iforest_batch(iforest, X[val])
        if val_labels.sum() > 0:
            sel = select_threshold(if_scores, val_labels, IFOREST_POLICY)
            iforest.threshold = sel.threshold
            threshold_info["iforest"] = {"policy": "max_f_beta(1.0)", "threshold": sel.threshold}
        else:
            iforest.threshold = float(np.quantile(if_scores, 1.0 - config.cold_start_flag_rate))
            threshold_info["iforest"] = {
                "policy": "cold_start_quantile",
                "threshold": iforest.threshold,
            }

    if rf is not None:
        rf_scores = predict_rf_batch(rf, X[val])
        sel = select_threshold(rf_scores, val_labels, RF_POLICY)
        rf.threshold = sel.threshold
        threshold_info["rf"] = {
            "policy": "max_recall_at_min_precision(0.8)",
            "threshold": sel.threshold,
            "precision": sel.precision,
            "recall": sel.recall,
            "min_precision_unattainable": sel.warning,
        }

    return ModelBundle(
        version=version,
        created_at=created_at if created_at is not None else time.time(),
        schema=schema,
        gnb=gnb,
        iforest=iforest,
        rf=rf,
        tier_bounds=config.tier_bounds,
        threshold_info=threshold_info,
    )


def train_bundle_from_dataset(
    dataset: LabeledDataset,
    version: str,
    config: Optional[TrainConfig] = None,
) -> ModelBundle:
    return train_bundle(dataset.records, dataset.labels, version, config)
