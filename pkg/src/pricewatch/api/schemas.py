"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

API_SCHEMA_VERSION = 1


class ScoreRequest(BaseModel):
    """One item pricing snapshot; missing fields mean 'not observed'."""

    model_config = ConfigDict(extra="forbid")

    item_id: str
    division_id: Optional[int] = None
    super_department_id: Optional[int] = None
    department_id: Optional[int] = None
    category_id: Optional[int] = None
    subcategory_id: Optional[int] = None

    price: Optional[float] = Field(default=None, ge=0)
    cost: Optional[float] = Field(default=None, ge=0)
    competitor_price: Optional[float] = Field(default=None, ge=0)
    second_competitor_price: Optional[float] = Field(default=None, ge=0)
    third_competitor_price: Optional[float] = Field(default=None, ge=0)
    store_price: Optional[float] = Field(default=None, ge=0)
    marketplace_price: Optional[float] = Field(default=None, ge=0)
    list_price: Optional[float] = Field(default=None, ge=0)
    msrp: Optional[float] = Field(default=None, ge=0)
    map_price: Optional[float] = Field(default=None, ge=0)
    promo_price: Optional[float] = Field(default=None, ge=0)
    clearance_price: Optional[float] = Field(default=None, ge=0)

    avg_hist_price: Optional[float] = None
    hist_price_std: Optional[float] = None
    pct_price_swing: Optional[float] = None

    is_promo: bool = False
    is_bundle: bool = False
    is_marketplace: bool = False
    is_clearance: bool = False

    promotion_type: Optional[int] = None
    pricing_algo_type: Optional[int] = None

    inventory: Optional[int] = Field(default=None, ge=0)
    avg_rating: Optional[float] = Field(default=None, ge=0, le=5)
    unit_count: int = Field(default=1, ge=1)


class ScoreResponse(BaseModel):
    is_anomaly: bool
    score: float
    suspected_issues: list[str]
    priority_tier: int
    business_impact: float
    blocked: bool
    model_version: str
    used_node: str


class HealthResponse(BaseModel):
    status: str
    model_version: Optional[str]
    loaded_at: Optional[float]
    ttl_remaining: Optional[float]
    warning: Optional[str] = None


class ModelInfoResponse(BaseModel):
    version: str
    created_at: float
    fit_level: str
    epsilon: Optional[float]
    epsilon_s: Optional[float]
    tier_bounds: list[float]
    threshold_info: Optional[dict]
    feature_counts: dict
    has_iforest: bool
    has_rf: bool


class AlertOut(BaseModel):
    alert_id: str
    item_id: str
    created_at: float
    source: str
    batch_id: str
    score_gnb: float
    score_rf: float
    is_anomaly_gnb: bool
    is_anomaly_rf: bool
    suspected_issues: list[str]
    priority_tier: int
    business_impact: float
    record: dict
    model_version: Optional[str]
    status: str
    resolution: Optional[str]
    corrected_fields: Optional[dict]
    note: Optional[str]
    resolved_at: Optional[float]
    audit: list[dict]


class AlertPageResponse(BaseModel):
    schema_version: int = API_SCHEMA_VERSION
    alerts: list[AlertOut]
    total: int
    page: int
    page_size: int


class AlertDetailResponse(BaseModel):
    schema_version: int = API_SCHEMA_VERSION
    alert: AlertOut


class ResolutionRequest(BaseModel):
    resolution: str
    corrected_fields: Optional[dict] = None
    note: Optional[str] = None
    force: bool = False


class ReviewStatsResponse(BaseModel):
    schema_version: int = API_SCHEMA_VERSION
    n_alerts: int
    n_reviewed: int
    n_false_positive: int
    precision: Optional[float]
    precision_pct: Optional[float]
    per_source: dict[str, dict]


class IngestRequest(BaseModel):
    batch_id: str
    source: str = "batch"
    model_version: Optional[str] = None
    rows: list[dict]


class IngestResponse(BaseModel):
    schema_version: int = API_SCHEMA_VERSION
    created: list[str]
    n_created: int
