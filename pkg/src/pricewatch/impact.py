"""Business impact estimation and the production combined ranking.

Impact is a coarse exposure estimate: profit loss models under-pricing (some
reference price sits above the live price), foregone revenue models
over-pricing (the cheapest reference bounds what the item could earn). Both
scale with inventory, and the larger of the two prioritizes the alert.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .explain import get_suspected_issues
from .features import BASELINE_FIELDS, FeatureSchema, build_matrix
from .gnb import GnbModel, score_gnb
from .forest import RandomForestModel, predict_rf_batch
from .records import ItemRecord

DEFAULT_TIER_BOUNDS = (1_000.0, 10_000.0)


@dataclass(frozen=True)
class ImpactResult:
    profit_loss: float
    foregone_revenue: float
    business_impact: float
    priority_tier: int
    price_missing: bool = False


def business_impact(
    record: ItemRecord,
    tier_bounds: Sequence[float] = DEFAULT_TIER_BOUNDS,
    baseline_fields: Sequence[str] = BASELINE_FIELDS,
) -> ImpactResult:
    """Estimate exposure from the baseline price fields and inventory.

    profit_loss: largest non-missing reference above the live price, times
    inventory, clamped at zero (a reference below price is not a loss).
    foregone_revenue: smallest non-missing baseline price times inventory.
    Missing inventory counts as zero exposure; missing price makes profit
    loss undefined (reported as 0 with the price_missing flag).
    """
    inventory = record.inventory if record.inventory is not None else 0

    price = record.price
    price_missing = price is None

    best_gap = None
    lowest = None
    for f in baseline_fields:
        x = getattr(record, f)
        if x is None:
            continue
        if lowest is None or x < lowest:
            lowest = x
        if f != "price" and not price_missing:
            gap = x - price
            if best_gap is None or gap > best_gap:
                best_gap = gap

    profit_loss = max(0.0, best_gap) * inventory if best_gap is not None else 0.0
    foregone = lowest * inventory if lowest is not None else 0.0
    impact = max(profit_loss, foregone)
    return ImpactResult(
        profit_loss=profit_loss,
        foregone_revenue=foregone,
        business_impact=impact,
        priority_tier=assign_priority(impact, tier_bounds),
        price_missing=price_missing,
    )


def assign_priority(impact: float, tier_bounds: Sequence[float]) -> int:
    """Tier 0 for impact at or above the top bound, one more per bound below.

    tier_bounds must be strictly ascending; an empty list collapses everything
    into tier 0.
    """
    bounds = list(tier_bounds)
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ValueError(f"tier bounds must be strictly ascending, got {bounds}")
    return sum(1 for b in bounds if impact < b)


@dataclass
class RankedAlertRow:
    """One scored item in the production ranking order."""

    item_id: str
    is_anomaly: bool
    is_anomaly_gnb: bool
    is_anomaly_rf: bool
    score_gnb: float
    score_rf: float
    priority_tier: int
    business_impact: float
    profit_loss: float
    foregone_revenue: float
    suspected_issues: tuple[str, ...]
    record: dict = field(default_factory=dict)

    def sort_key(self):
        # Descending by RF flag, GNB flag, priority (tier 0 first), impact,
        # then both scores; item id breaks remaining ties ascending.
        return (
            not self.is_anomaly_rf,
            not self.is_anomaly_gnb,
            self.priority_tier,
            -self.business_impact,
            -self.score_gnb,
            -self.score_rf,
            self.item_id,
        )

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "is_anomaly": self.is_anomaly,
            "is_anomaly_gnb": self.is_anomaly_gnb,
            "is_anomaly_rf": self.is_anomaly_rf,
            "score_gnb": self.score_gnb,
            "score_rf": self.score_rf,
            "priority_tier": self.priority_tier,
            "business_impact": self.business_impact,
            "profit_loss": self.profit_loss,
            "foregone_revenue": self.foregone_revenue,
            "suspected_issues": list(self.suspected_issues),
            "record": self.record,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RankedAlertRow":
        return cls(
            item_id=doc["item_id"],
            is_anomaly=doc["is_anomaly"],
            is_anomaly_gnb=doc["is_anomaly_gnb"],
            is_anomaly_rf=doc["is_anomaly_rf"],
            score_gnb=doc["score_gnb"],
            score_rf=doc["score_rf"],
            priority_tier=doc["priority_tier"],
            business_impact=doc["business_impact"],
            profit_loss=doc.get("profit_loss", 0.0),
            foregone_revenue=doc.get("foregone_revenue", 0.0),
            suspected_issues=tuple(doc["suspected_issues"]),
            record=doc.get("record", {}),
        )


def combined_predict(
    records: Sequence[ItemRecord],
    gnb_model: GnbModel,
    rf_model: Optional[RandomForestModel],
    schema: FeatureSchema,
    tier_bounds: Sequence[float] = DEFAULT_TIER_BOUNDS,
    feature_matrix: Optional[np.ndarray] = None,
) -> list[RankedAlertRow]:
    """Score every record with both models and rank for review.

    Items flagged by both models come first, then RF-only, then GNB-only,
    then clean rows; within a group the priority tier, business impact and
    scores decide. Without an RF model the RF flag and score are zero for
    every row (early deployments ran the density model alone).
    """
    if gnb_model.epsilon is None or gnb_model.epsilon_s is None:
        raise ValueError("GNB model needs epsilon / epsilon_s before ranking")

    if rf_model is not None:
        if rf_model.threshold is None:
            raise ValueError("RF model needs a threshold before ranking")
        if feature_matrix is None:
            feature_matrix = build_matrix(records, schema)
        rf_probs = predict_rf_batch(rf_model, feature_matrix)
    else:
        rf_probs = np.zeros(len(records))

    names = schema.issue_names
    rows = []
    for i, record in enumerate(records):
        breakdown = score_gnb(gnb_model, record)
        flag_g = breakdown.total > gnb_model.epsilon
        prob_rf = float(rf_probs[i])
        flag_rf = rf_model is not None and prob_rf > rf_model.threshold
        issues = get_suspected_issues(breakdown, names, gnb_model.epsilon_s)
        imp = business_impact(record, tier_bounds)
        rows.append(
            RankedAlertRow(
                item_id=record.item_id,
                is_anomaly=flag_g or flag_rf,
                is_anomaly_gnb=flag_g,
                is_anomaly_rf=flag_rf,
                score_gnb=breakdown.total,
                score_rf=prob_rf,
                priority_tier=imp.priority_tier,
                business_impact=imp.business_impact,
                profit_loss=imp.profit_loss,
                foregone_revenue=imp.foregone_revenue,
                suspected_issues=issues.issues,
                record=record.to_dict(),
            )
        )
    rows.sort(key=RankedAlertRow.sort_key)
    return rows


def cap_alerts(rows: Sequence[RankedAlertRow], capacity: int) -> list[RankedAlertRow]:
    """The top anomalous rows, at most capacity of them, in ranking order."""
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    out = []
    for row in rows:
        if len(out) >= capacity:
            break
        if row.is_anomaly:
            out.append(row)
    return out
