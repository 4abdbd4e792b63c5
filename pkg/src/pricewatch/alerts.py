"""Alert persistence and the human-review feedback loop.

Storage is an append-only line-delimited JSON event log (created / resolved
events) with on-demand compaction to a snapshot file. Events are the source
of truth: a re-resolution appends a new event rather than editing history,
which is what lets reviews themselves be audited later. A single store owns
its log file; writes are serialized, readers see a consistent state.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .impact import RankedAlertRow

RESOLUTIONS = ("true_positive", "false_positive")


class AlertError(RuntimeError):
    pass


class AlertNotFound(AlertError):
    pass


class AlertConflict(AlertError):
    """Alert already resolved; pass force=True to overwrite."""


@dataclass
class Alert:
    alert_id: str
    item_id: str
    created_at: float
    source: str  # "batch" or "stream"
    batch_id: str
    score_gnb: float
    score_rf: float
    is_anomaly_gnb: bool
    is_anomaly_rf: bool
    suspected_issues: tuple[str, ...]
    priority_tier: int
    business_impact: float
    record: dict
    model_version: Optional[str] = None
    status: str = "open"
    resolution: Optional[str] = None
    corrected_fields: Optional[dict] = None
    note: Optional[str] = None
    resolved_at: Optional[float] = None
    audit: list[dict] = field(default_factory=list)

    def sort_key(self):
        # Identical ordering to the batch ranking output.
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
            "alert_id": self.alert_id,
            "item_id": self.item_id,
            "created_at": self.created_at,
            "source": self.source,
            "batch_id": self.batch_id,
            "score_gnb": self.score_gnb,
            "score_rf": self.score_rf,
            "is_anomaly_gnb": self.is_anomaly_gnb,
            "is_anomaly_rf": self.is_anomaly_rf,
            "suspected_issues": list(self.suspected_issues),
            "priority_tier": self.priority_tier,
            "business_impact": self.business_impact,
            "record": self.record,
            "model_version": self.model_version,
            "status": self.status,
            "resolution": self.resolution,
            "corrected_fields": self.corrected_fields,
            "note": self.note,
            "resolved_at": self.resolved_at,
            "audit": self.audit,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Alert":
        doc = dict(doc)
        doc["suspected_issues"] = tuple(doc.get("suspected_issues", ()))
        doc.setdefault("audit", [])
        return cls(**doc)


@dataclass
class ReviewStats:
    n_alerts: int
    n_reviewed: int
    n_false_positive: int
    precision: Optional[float]  # None until anything is reviewed
    per_source: dict[str, dict] = field(default_factory=dict)

    @property
    def precision_pct(self) -> Optional[float]:
        """Precision as a percentage at 0.1% display resolution."""
        if self.precision is None:
            return None
        return round(self.precision * 100.0, 1)

    def to_dict(self) -> dict:
        return {
            "n_alerts": self.n_alerts,
            "n_reviewed": self.n_reviewed,
            "n_false_positive": self.n_false_positive,
            "precision": self.precision,
            "precision_pct": self.precision_pct,
            "per_source": self.per_source,
        }


def compute_review_stats(
    alerts: Iterable[Alert],
    since: Optional[float] = None,
    until: Optional[float] = None,
) -> ReviewStats:
    """Recompute stats from raw alerts; the windows filter on created_at."""
    pool = [
        a
        for a in alerts
        if (since is None or a.created_at >= since)
        and (until is None or a.created_at < until)
    ]
    per_source: dict[str, dict] = {}
    n_reviewed = 0
    n_fp = 0
    for a in pool:
        bucket = per_source.setdefault(
            a.source, {"n_alerts": 0, "n_reviewed": 0, "n_false_positive": 0}
        )
        bucket["n_alerts"] += 1
        if a.status == "resolved":
            n_reviewed += 1
            bucket["n_reviewed"] += 1
            if a.resolution == "false_positive":
                n_fp += 1
                bucket["n_false_positive"] += 1
    precision = (n_reviewed - n_fp) / n_reviewed if n_reviewed > 0 else None
    return ReviewStats(
        n_alerts=len(pool),
        n_reviewed=n_reviewed,
        n_false_positive=n_fp,
        precision=precision,
        per_source=per_source,
    )


class AlertStore:
    """Event-log backed alert store with idempotent ingest.

    Batch alerts are keyed by (batch_id, item_id), so replaying the same
    batch creates nothing new. Stream alerts are keyed by (model_version,
    item_id): the same item blocked repeatedly under one model is one alert.
    """

    def __init__(self, path: str | Path, clock: Callable[[], float] = time.time):
        self.path = Path(path)
        self.snapshot_path = self.path.with_name(self.path.name + ".snapshot")
        self.clock = clock
        self._lock = threading.Lock()
        self._alerts: dict[str, Alert] = {}
        self._load()

    # -- persistence -------------------------------------------------------

    def _load(self) -> None:
        for source in (self.snapshot_path, self.path):
            if not source.exists():
                continue
            with open(source, "r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        if event["event"] == "created":
            alert = Alert.from_dict(event["alert"])
            self._alerts.setdefault(alert.alert_id, alert)
        elif event["event"] == "resolved":
            alert = self._alerts.get(event["alert_id"])
            if alert is None:
                return
            self._mark_resolved(
                alert,
                event["resolution"],
                event.get("corrected_fields"),
                event.get("note"),
                event["ts"],
            )

    @staticmethod
    def _mark_resolved(alert, resolution, corrected_fields, note, ts) -> None:
        alert.audit.append(
            {
                "ts": ts,
                "resolution": resolution,
                "corrected_fields": corrected_fields,
                "note": note,
            }
        )
        alert.status = "resolved"
        alert.resolution = resolution
        alert.corrected_fields = corrected_fields
        alert.note = note
        alert.resolved_at = ts

    def _append(self, event: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(event) + "\n")

    def compact(self) -> None:
        """Fold the event log into the snapshot file and truncate the log."""
        with self._lock:
            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as handle:
                for alert in self._alerts.values():
                    handle.write(
                        json.dumps({"event": "created", "alert": alert.to_dict()}) + "\n"
                    )
            tmp.replace(self.snapshot_path)
            if self.path.exists():
                self.path.unlink()

    # -- writes ------------------------------------------------------------

    def ingest(
        self,
        rows: Sequence[RankedAlertRow],
        batch_id: str,
        source: str = "batch",
        model_version: Optional[str] = None,
    ) -> list[str]:
        """One open alert per ranked row; replays of the same batch are no-ops."""
        created = []
        with self._lock:
            now = self.clock()
            for row in rows:
                alert_id = f"{source}:{batch_id}:{row.item_id}"
                if alert_id in self._alerts:
                    continue
                alert = Alert(
                    alert_id=alert_id,
                    item_id=row.item_id,
                    created_at=now,
                    source=source,
                    batch_id=batch_id,
                    score_gnb=row.score_gnb,
                    score_rf=row.score_rf,
                    is_anomaly_gnb=row.is_anomaly_gnb,
                    is_anomaly_rf=row.is_anomaly_rf,
                    suspected_issues=row.suspected_issues,
                    priority_tier=row.priority_tier,
                    business_impact=row.business_impact,
                    record=row.record,
                    model_version=model_version,
                )
                self._alerts[alert.alert_id] = alert
                self._append({"event": "created", "alert": alert.to_dict()})
                created.append(alert.alert_id)
        return created

    def create_stream_alert(
        self,
        item_id: str,
        record: dict,
        score_gnb: float,
        suspected_issues: Sequence[str],
        priority_tier: int,
        business_impact: float,
        model_version: str,
    ) -> Optional[str]:
        """Alert for a blocked streaming price; None if it already exists."""
        with self._lock:
            alert_id = f"stream:{model_version}:{item_id}"
            if alert_id in self._alerts:
                return None
            alert = Alert(
                alert_id=alert_id,
                item_id=item_id,
                created_at=self.clock(),
                source="stream",
                batch_id=model_version,
                score_gnb=score_gnb,
                score_rf=0.0,
                is_anomaly_gnb=True,
                is_anomaly_rf=False,
                suspected_issues=tuple(suspected_issues),
                priority_tier=priority_tier,
                business_impact=business_impact,
                record=record,
                model_version=model_version,
            )
            self._alerts[alert_id] = alert
            self._append({"event": "created", "alert": alert.to_dict()})
            return alert_id

    def resolve(
        self,
        alert_id: str,
        resolution: str,
        corrected_fields: Optional[dict] = None,
        note: Optional[str] = None,
        force: bool = False,
    ) -> Alert:
        if resolution not in RESOLUTIONS:
            raise AlertError(f"resolution must be one of {RESOLUTIONS}, got {resolution!r}")
        with self._lock:
            alert = self._alerts.get(alert_id)
            if alert is None:
                raise AlertNotFound(alert_id)
            if alert.status == "resolved" and not force:
                raise AlertConflict(alert_id)
            ts = self.clock()
            self._mark_resolved(alert, resolution, corrected_fields, note, ts)
            self._append(
                {
                    "event": "resolved",
                    "ts": ts,
                    "alert_id": alert_id,
                    "resolution": resolution,
                    "corrected_fields": corrected_fields,
                    "note": note,
                    "force": force,
                }
            )
            return alert

    # -- reads ---------------------------------------------------------------

    def get(self, alert_id: str) -> Alert:
        with self._lock:
            alert = self._alerts.get(alert_id)
            if alert is None:
                raise AlertNotFound(alert_id)
            return alert

    def list_alerts(
        self,
        status: Optional[str] = None,
        source: Optional[str] = None,
        tier: Optional[int] = None,
        page: int = 1,
        page_size: int = 50,
    ) -> tuple[list[Alert], int]:
        """Filtered page in ranking order; returns (page, total_matching)."""
        if page < 1 or page_size < 1:
            raise AlertError("page and page_size must be >= 1")
        with self._lock:
            pool = list(self._alerts.values())
        if status is not None:
            pool = [a for a in pool if a.status == status]
        if source is not None:
            pool = [a for a in pool if a.source == source]
        if tier is not None:
            pool = [a for a in pool if a.priority_tier == tier]
        pool.sort(key=Alert.sort_key)
        start = (page - 1) * page_size
        return pool[start : start + page_size], len(pool)

    def export_labels(self, since: Optional[float] = None) -> list[dict]:
        """Training rows from resolved alerts: item snapshot plus 0/1 label."""
        with self._lock:
            resolved = [
                a
                for a in self._alerts.values()
                if a.status == "resolved"
                and (since is None or a.resolved_at >= since)
            ]
        resolved.sort(key=lambda a: (a.resolved_at, a.alert_id))
        return [
            {
                "alert_id": a.alert_id,
                "item_id": a.item_id,
                "label": 1 if a.resolution == "true_positive" else 0,
                "resolved_at": a.resolved_at,
                "record": a.record,
            }
            for a in resolved
        ]

    def review_stats(
        self, since: Optional[float] = None, until: Optional[float] = None
    ) -> ReviewStats:
        with self._lock:
            pool = list(self._alerts.values())
        return compute_review_stats(pool, since=since, until=until)

    def __len__(self) -> int:
        with self._lock:
            return len(self._alerts)
