"""FastAPI service: streaming scoring plus the alert review API.

Scoring uses the density-model path only (it has to stay inside the
sub-millisecond budget); the heavier ensembles run in the batch job. The
loaded bundle is shared and immutable; the TTL cache swaps it atomically so
requests see either the old or the new bundle, never a mix.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

import json

from ..alerts import AlertConflict, AlertError, AlertNotFound, AlertStore
from ..bundle import BundleUnavailable, TtlCache
from ..explain import get_suspected_issues
from ..gnb import score_gnb
from ..impact import RankedAlertRow, business_impact
from ..records import RecordError, parse_record
from .schemas import (
    API_SCHEMA_VERSION,
    AlertDetailResponse,
    AlertOut,
    AlertPageResponse,
    HealthResponse,
    IngestRequest,
    IngestResponse,
    ModelInfoResponse,
    ResolutionRequest,
    ReviewStatsResponse,
    ScoreRequest,
    ScoreResponse,
)


def create_app(
    bundle_dir: str | Path,
    store_path: Optional[str | Path] = None,
    ttl_seconds: float = 7200.0,
    clock: Callable[[], float] = time.time,
    frontend_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="pricewatch", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    cache = TtlCache(bundle_dir, ttl_seconds=ttl_seconds, clock=clock)
    store = AlertStore(store_path, clock=clock) if store_path else None
    app.state.cache = cache
    app.state.store = store

    def current_bundle():
        try:
            return cache.get()
        except BundleUnavailable as exc:
            raise HTTPException(status_code=503, detail=f"no model bundle available: {exc}")

    def require_store() -> AlertStore:
        if store is None:
            raise HTTPException(status_code=503, detail="no alert store configured")
        return store

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(request: ScoreRequest) -> ScoreResponse:
        bundle = current_bundle()
        try:
            record = parse_record(
                {k: v for k, v in request.model_dump().items() if v is not None}
            )
        except RecordError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

        breakdown = score_gnb(bundle.gnb, record)
        is_anomaly = breakdown.total > bundle.gnb.epsilon
        issues = get_suspected_issues(
            breakdown, bundle.schema.issue_names, bundle.gnb.epsilon_s
        )
        imp = business_impact(record, bundle.tier_bounds)
        blocked = is_anomaly and imp.priority_tier == 0

        if blocked and store is not None:
            store.create_stream_alert(
                item_id=record.item_id,
                record=record.to_dict(),
                score_gnb=breakdown.total,
                suspected_issues=issues.issues,
                priority_tier=imp.priority_tier,
                business_impact=imp.business_impact,
                model_version=bundle.version,
            )

        return ScoreResponse(
            is_anomaly=is_anomaly,
            score=breakdown.total,
            suspected_issues=list(issues.issues),
            priority_tier=imp.priority_tier,
            business_impact=imp.business_impact,
            blocked=blocked,
            model_version=bundle.version,
            used_node=breakdown.used_node,
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        state = cache.state()
        if state["model_version"] is None:
            try:
                cache.get()
                state = cache.state()
            except BundleUnavailable as exc:
                return HealthResponse(
                    status="degraded",
                    model_version=None,
                    loaded_at=None,
                    ttl_remaining=None,
                    warning=str(exc),
                )
        status = "degraded" if state["warning"] else "ok"
        return HealthResponse(
            status=status,
            model_version=state["model_version"],
            loaded_at=state["loaded_at"],
            ttl_remaining=state["ttl_remaining"],
            warning=state["warning"],
        )

    @app.get("/v1/model", response_model=ModelInfoResponse)
    def model_info() -> ModelInfoResponse:
        bundle = current_bundle()
        return ModelInfoResponse(
            version=bundle.version,
            created_at=bundle.created_at,
            fit_level=bundle.gnb.fit_level,
            epsilon=bundle.gnb.epsilon,
            epsilon_s=bundle.gnb.epsilon_s,
            tier_bounds=list(bundle.tier_bounds),
            threshold_info=bundle.threshold_info,
            feature_counts=bundle.schema.declared_counts(),
            has_iforest=bundle.iforest is not None,
            has_rf=bundle.rf is not None,
        )

    @app.get("/v1/alerts", response_model=AlertPageResponse)
    def list_alerts(
        status: Optional[str] = Query(default=None),
        source: Optional[str] = Query(default=None),
        tier: Optional[int] = Query(default=None),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
    ) -> AlertPageResponse:
        if status is not None and status not in ("open", "resolved"):
            raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        if source is not None and source not in ("batch", "stream"):
            raise HTTPException(status_code=400, detail=f"unknown source {source!r}")
        alerts, total = require_store().list_alerts(
            status=status, source=source, tier=tier, page=page, page_size=page_size
        )
        return AlertPageResponse(
            alerts=[AlertOut(**a.to_dict()) for a in alerts],
            total=total,
            page=page,
            page_size=page_size,
        )

    @app.post("/v1/alerts/ingest", response_model=IngestResponse)
    def ingest_alerts(request: IngestRequest) -> IngestResponse:
        if request.source not in ("batch", "stream"):
            raise HTTPException(status_code=400, detail=f"unknown source {request.source!r}")
        try:
            rows = [RankedAlertRow.from_dict(doc) for doc in request.rows]
        except KeyError as exc:
            raise HTTPException(status_code=422, detail=f"row missing field {exc}")
        created = require_store().ingest(
            rows,
            batch_id=request.batch_id,
            source=request.source,
            model_version=request.model_version,
        )
        return IngestResponse(created=created, n_created=len(created))

    @app.get("/v1/alerts/{alert_id}", response_model=AlertDetailResponse)
    def get_alert(alert_id: str) -> AlertDetailResponse:
        try:
            alert = require_store().get(alert_id)
        except AlertNotFound:
            raise HTTPException(status_code=404, detail=f"alert {alert_id!r} not found")
        return AlertDetailResponse(alert=AlertOut(**alert.to_dict()))

    @app.post("/v1/alerts/{alert_id}/resolution", response_model=AlertDetailResponse)
    def resolve_alert(alert_id: str, request: ResolutionRequest) -> AlertDetailResponse:
        try:
            alert = require_store().resolve(
                alert_id,
                resolution=request.resolution,
                corrected_fields=request.corrected_fields,
                note=request.note,
                force=request.force,
            )
        except AlertNotFound:
            raise HTTPException(status_code=404, detail=f"alert {alert_id!r} not found")
        except AlertConflict:
            raise HTTPException(
                status_code=409, detail=f"alert {alert_id!r} already resolved"
            )
        except AlertError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return AlertDetailResponse(alert=AlertOut(**alert.to_dict()))

    @app.get("/v1/labels/export")
    def export_labels(since: Optional[float] = Query(default=None)) -> PlainTextResponse:
        rows = require_store().export_labels(since=since)
        body = "".join(json.dumps(row) + "\n" for row in rows)
        return PlainTextResponse(content=body, media_type="application/x-ndjson")

    @app.get("/v1/stats/review", response_model=ReviewStatsResponse)
    def review_stats(
        since: Optional[float] = Query(default=None),
        until: Optional[float] = Query(default=None),
    ) -> ReviewStatsResponse:
        stats = require_store().review_stats(since=since, until=until)
        return ReviewStatsResponse(**stats.to_dict())

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
