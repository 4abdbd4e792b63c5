"""Feature schema and construction.

The schema is a fixed, ordered list of feature columns derived from the raw
record fields:

* raw price points (set ``P``), six of which are the baseline set ``A``
* time-series summaries (``T``)
* differences and margins of every price point against cost and against the
  live price (``P_T``)
* log-ratio features log((x + c1) / (den + c1)) + c2, cost-denominated over
  the baseline set (``A_L``) and price-denominated for the rest (all log and
  transformed columns together form ``P_L``)
* label-encoded hierarchy ids (``H``), binary flags (``B``), one-hot encoded
  categoricals (``C``) and other numerics (``O``)

Missing values propagate: any derived column with a missing input is masked.
Masked entries carry NaN in the dense vector and are flagged in the boolean
mask; nothing downstream may read them as numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .records import (
    BINARY_FIELDS,
    CATEGORICAL_FIELDS,
    HIERARCHY_FIELDS,
    HIERARCHY_LEVELS,
    ItemRecord,
    OTHER_NUMERIC_FIELDS,
    PRICE_FIELDS,
    TIME_SERIES_FIELDS,
)

SCHEMA_FORMAT_VERSION = 1

# The six baseline price fields (must all be raw price fields). Order fixes
# the order of the log-ratio features and of the issue names shown to
# reviewers.
BASELINE_FIELDS = (
    "price",
    "cost",
    "competitor_price",
    "store_price",
    "marketplace_price",
    "list_price",
)

# Reviewer-facing display names for baseline fields.
DISPLAY_NAMES = {
    "price": "Price",
    "cost": "Cost",
    "competitor_price": "CompetitorPrice",
    "store_price": "StorePrice",
    "marketplace_price": "MarketplacePrice",
    "list_price": "ListPrice",
}


class FeatureDomainError(ValueError):
    """A transform produced a non-finite value from present inputs."""


def log_transform(
    x_num: Optional[float],
    x_den: Optional[float],
    c1: float,
    c2: float,
) -> Optional[float]:
    """log((x_num + c1) / (x_den + c1)) + c2, or None if either input is missing.

    Raises FeatureDomainError when the shifted ratio is not strictly positive
    (e.g. denominator + c1 <= 0), since the log would be non-finite.
    """
    if x_num is None or x_den is None:
        return None
    den = x_den + c1
    num = x_num + c1
    if den <= 0.0 or num <= 0.0:
        raise FeatureDomainError(
            f"log transform undefined for x_num={x_num}, x_den={x_den}, c1={c1}"
        )
    return math.log(num / den) + c2


@dataclass(frozen=True)
class FeatureColumn:
    """One slot of the dense feature vector.

    kind is one of: raw, hierarchy, binary, onehot, numeric, diff, margin,
    log_ratio. ``sources`` names the record fields consumed; ``sets`` the
    feature-set tags the column belongs to.
    """

    name: str
    kind: str
    sources: tuple[str, ...]
    sets: frozenset[str]
    level: Optional[int] = None  # one-hot: the encoded categorical level


@dataclass(frozen=True)
class FeatureSchema:
    """Immutable, ordered feature registry. Fit once, shared by all scorers."""

    columns: tuple[FeatureColumn, ...]
    c1: float
    c2: float
    categorical_levels: dict[str, tuple[int, ...]]
    baseline_fields: tuple[str, ...] = BASELINE_FIELDS

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(col.name for col in self.columns)

    @property
    def baseline_log_numerators(self) -> tuple[str, ...]:
        """Numerator fields of the cost-denominated log features, in order."""
        return tuple(f for f in self.baseline_fields if f != "cost")

    @property
    def issue_names(self) -> tuple[str, ...]:
        """Display names paired with each cost-denominated log feature."""
        return tuple(DISPLAY_NAMES[f] for f in self.baseline_log_numerators)

    def indices_of(self, set_name: str) -> tuple[int, ...]:
        return tuple(i for i, col in enumerate(self.columns) if set_name in col.sets)

    def declared_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in ("P", "A", "A_L", "T", "P_T", "P_L", "H", "B", "C", "O")}
        for col in self.columns:
            for s in col.sets:
                counts[s] += 1
        counts["total"] = len(self.columns)
        return counts

    def to_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_FORMAT_VERSION,
            "c1": self.c1,
            "c2": self.c2,
            "baseline_fields": list(self.baseline_fields),
            "categorical_levels": {k: list(v) for k, v in self.categorical_levels.items()},
            "declared_counts": self.declared_counts(),
            "columns": [
                {
                    "name": col.name,
                    "kind": col.kind,
                    "sources": list(col.sources),
                    "sets": sorted(col.sets),
                    "level": col.level,
                }
                for col in self.columns
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        doc = json.loads(text)
        if doc["schema_version"] != SCHEMA_FORMAT_VERSION:
            raise ValueError(f"unsupported schema version {doc['schema_version']}")
        columns = tuple(
            FeatureColumn(
                name=c["name"],
                kind=c["kind"],
                sources=tuple(c["sources"]),
                sets=frozenset(c["sets"]),
                level=c["level"],
            )
            for c in doc["columns"]
        )
        return cls(
            columns=columns,
            c1=doc["c1"],
            c2=doc["c2"],
            categorical_levels={k: tuple(v) for k, v in doc["categorical_levels"].items()},
            baseline_fields=tuple(doc["baseline_fields"]),
        )


@dataclass
class FeatureVector:
    """Dense vector aligned to a schema; masked entries hold NaN."""

    values: np.ndarray
    mask: np.ndarray  # True where the entry is missing/undefined

    def __post_init__(self):
        assert self.values.shape == self.mask.shape


def _build_columns(categorical_levels: dict[str, tuple[int, ...]]) -> tuple[FeatureColumn, ...]:
    cols: list[FeatureColumn] = []
    baseline = set(BASELINE_FIELDS)

    for f in PRICE_FIELDS:
        sets = {"P"}
        if f in baseline:
            sets.add("A")
        cols.append(FeatureColumn(f, "raw", (f,), frozenset(sets)))

    for f in TIME_SERIES_FIELDS:
        cols.append(FeatureColumn(f, "raw", (f,), frozenset({"T"})))

    # Differences and margins against cost, then against price.
    for den in ("cost", "price"):
        others = [f for f in PRICE_FIELDS if f != den and (den == "cost" or f != "cost")]
        for f in others:
            cols.append(
                FeatureColumn(f"diff_{f}_{den}", "diff", (f, den), frozenset({"P_T", "P_L"}))
            )
        for f in others:
            cols.append(
                FeatureColumn(f"margin_{f}_{den}", "margin", (f, den), frozenset({"P_T", "P_L"}))
            )

    # Cost-denominated log ratios over the baseline set (the explainable five).
    for f in BASELINE_FIELDS:
        if f == "cost":
            continue
        cols.append(
            FeatureColumn(f"log_{f}_over_cost", "log_ratio", (f, "cost"), frozenset({"A_L", "P_L"}))
        )
    # Price-denominated log ratios for the remaining baseline fields.
    for f in BASELINE_FIELDS:
        if f in ("price", "cost"):
            continue
        cols.append(
            FeatureColumn(f"log_{f}_over_price", "log_ratio", (f, "price"), frozenset({"P_L"}))
        )

    for f in HIERARCHY_FIELDS:
        cols.append(FeatureColumn(f"hier_{f[:-3]}", "hierarchy", (f,), frozenset({"H"})))

    for f in BINARY_FIELDS:
        cols.append(FeatureColumn(f, "binary", (f,), frozenset({"B"})))

    for f in CATEGORICAL_FIELDS:
        for level in categorical_levels.get(f, ()):
            cols.append(FeatureColumn(f"{f}={level}", "onehot", (f,), frozenset({"C"}), level))

    for f in OTHER_NUMERIC_FIELDS:
        cols.append(FeatureColumn(f, "numeric", (f,), frozenset({"O"})))

    return tuple(cols)


def fit_schema(
    records: Sequence[ItemRecord],
    c1: float = 1.0,
    c2: float = 0.0,
) -> FeatureSchema:
    """Fit the schema on training records: collects categorical levels.

    c1 must be positive so log ratios stay defined for zero-valued currency
    fields; c2 is an additive shift applied to every log feature.
    """
    if c1 <= 0:
        raise ValueError(f"c1 must be > 0, got {c1}")
    levels: dict[str, tuple[int, ...]] = {}
    for f in CATEGORICAL_FIELDS:
        observed = {getattr(r, f) for r in records if getattr(r, f) is not None}
        levels[f] = tuple(sorted(observed))
    return FeatureSchema(columns=_build_columns(levels), c1=c1, c2=c2, categorical_levels=levels)


def _safe_log_ratio(x: Optional[float], den: Optional[float], c1: float, c2: float) -> Optional[float]:
    """Like log_transform but returns None instead of raising (vector building)."""
    if x is None or den is None:
        return None
    num_s = x + c1
    den_s = den + c1
    if num_s <= 0.0 or den_s <= 0.0:
        return None
    return math.log(num_s / den_s) + c2


def price_transforms(record: ItemRecord, schema: FeatureSchema) -> dict[str, Optional[float]]:
    """Difference and margin features for every transformed-price slot.

    Returns a name -> value map covering exactly the P_T columns; None marks
    a missing input or a margin with zero denominator.
    """
    out: dict[str, Optional[float]] = {}
    for col in schema.columns:
        if col.kind == "diff":
            x = getattr(record, col.sources[0])
            den = getattr(record, col.sources[1])
            out[col.name] = None if x is None or den is None else x - den
        elif col.kind == "margin":
            x = getattr(record, col.sources[0])
            den = getattr(record, col.sources[1])
            if x is None or den is None or den == 0.0:
                out[col.name] = None
            else:
                out[col.name] = (x - den) / den
    return out


def baseline_log_features(record: ItemRecord, schema: FeatureSchema) -> list[Optional[float]]:
    """The cost-denominated log features, ordered as schema.issue_names.

    Pure-Python hot path: used per request by the streaming scorer.
    """
    cost = record.cost
    c1 = schema.c1
    c2 = schema.c2
    out: list[Optional[float]] = []
    if cost is None:
        return [None] * len(schema.baseline_log_numerators)
    den = cost + c1
    if den <= 0.0:
        return [None] * len(schema.baseline_log_numerators)
    for f in schema.baseline_log_numerators:
        x = getattr(record, f)
        if x is None or x + c1 <= 0.0:
            out.append(None)
        else:
            out.append(math.log((x + c1) / den) + c2)
    return out


def build_feature_vector(record: ItemRecord, schema: FeatureSchema) -> FeatureVector:
    """Dense vector for one record, in schema order. Deterministic and pure."""
    n = len(schema.columns)
    values = np.full(n, np.nan, dtype=np.float64)
    mask = np.ones(n, dtype=bool)

    for i, col in enumerate(schema.columns):
        kind = col.kind
        if kind in ("raw", "numeric"):
            v = getattr(record, col.sources[0])
            if v is not None:
                values[i] = float(v)
                mask[i] = False
        elif kind == "hierarchy":
            v = getattr(record, col.sources[0])
            if v is not None:
                values[i] = float(v)
                mask[i] = False
        elif kind == "binary":
            values[i] = 1.0 if getattr(record, col.sources[0]) else 0.0
            mask[i] = False
        elif kind == "onehot":
            v = getattr(record, col.sources[0])
            # Missing or unseen level: all-zero block, still a defined value.
            values[i] = 1.0 if v == col.level else 0.0
            mask[i] = False
        elif kind == "diff":
            x = getattr(record, col.sources[0])
            den = getattr(record, col.sources[1])
            if x is not None and den is not None:
                values[i] = x - den
                mask[i] = False
        elif kind == "margin":
            x = getattr(record, col.sources[0])
            den = getattr(record, col.sources[1])
            if x is not None and den is not None and den != 0.0:
                values[i] = (x - den) / den
                mask[i] = False
        elif kind == "log_ratio":
            v = _safe_log_ratio(
                getattr(record, col.sources[0]),
                getattr(record, col.sources[1]),
                schema.c1,
                schema.c2,
            )
            if v is not None:
                values[i] = v
                mask[i] = False
        else:  # pragma: no cover - schema construction guarantees known kinds
            raise AssertionError(f"unknown column kind {kind}")

    return FeatureVector(values=values, mask=mask)


def _raw_columns(records: Sequence[ItemRecord]) -> dict[str, np.ndarray]:
    """Extract every record field into a float64 column (NaN = missing)."""
    n = len(records)
    cols: dict[str, np.ndarray] = {}
    float_fields = PRICE_FIELDS + TIME_SERIES_FIELDS + ("avg_rating",)
    for f in float_fields + HIERARCHY_FIELDS + CATEGORICAL_FIELDS + ("inventory", "unit_count"):
        col = np.full(n, np.nan, dtype=np.float64)
        for i, r in enumerate(records):
            v = getattr(r, f)
            if v is not None:
                col[i] = float(v)
        cols[f] = col
    for f in BINARY_FIELDS:
        cols[f] = np.array([1.0 if getattr(r, f) else 0.0 for r in records], dtype=np.float64)
    return cols


def build_matrix(records: Sequence[ItemRecord], schema: FeatureSchema) -> np.ndarray:
    """Feature matrix (n_records, n_columns) with NaN at masked entries.

    Row i is bit-identical to build_feature_vector(records[i], schema).values;
    this is the vectorized batch path.
    """
    raw = _raw_columns(records)
    n = len(records)
    out = np.empty((n, len(schema.columns)), dtype=np.float64)

    with np.errstate(invalid="ignore", divide="ignore"):
        for j, col in enumerate(schema.columns):
            if col.kind in ("raw", "numeric", "hierarchy", "binary"):
                out[:, j] = raw[col.sources[0]]
            elif col.kind == "onehot":
                src = raw[col.sources[0]]
                out[:, j] = (src == col.level).astype(np.float64)
            elif col.kind == "diff":
                out[:, j] = raw[col.sources[0]] - raw[col.sources[1]]
            elif col.kind == "margin":
                den = raw[col.sources[1]]
                vals = (raw[col.sources[0]] - den) / den
                vals[den == 0.0] = np.nan
                out[:, j] = vals
            elif col.kind == "log_ratio":
                num_s = raw[col.sources[0]] + schema.c1
                den_s = raw[col.sources[1]] + schema.c1
                vals = np.log(num_s / den_s) + schema.c2
                vals[(num_s <= 0.0) | (den_s <= 0.0)] = np.nan
                out[:, j] = vals
    return out


def baseline_log_matrix(records: Sequence[ItemRecord], schema: FeatureSchema) -> np.ndarray:
    """Vectorized counterpart of baseline_log_features: (n, |A_L|) with NaN."""
    n = len(records)
    numerators = schema.baseline_log_numerators
    out = np.full((n, len(numerators)), np.nan, dtype=np.float64)
    cost = np.full(n, np.nan, dtype=np.float64)
    for i, r in enumerate(records):
        if r.cost is not None:
            cost[i] = r.cost
    den = cost + schema.c1
    with np.errstate(invalid="ignore", divide="ignore"):
        for k, f in enumerate(numerators):
            col = np.full(n, np.nan, dtype=np.float64)
            for i, r in enumerate(records):
                v = getattr(r, f)
                if v is not None:
                    col[i] = v
            num = col + schema.c1
            vals = np.log(num / den) + schema.c2
            vals[(num <= 0.0) | (den <= 0.0)] = np.nan
            out[:, k] = vals
    return out
