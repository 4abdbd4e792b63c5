"""Item pricing records: the raw input row every model and endpoint consumes.

A record is one item's pricing snapshot. Most fields are optional because the
upstream feeds routinely drop them; ``None`` always means "not observed", never
zero. Currency fields must be finite and non-negative when present.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Iterable, Iterator, Optional

# Hierarchy levels, coarsest first. Each record carries one id per level and
# a child id implies a fixed parent id within a given catalog.
HIERARCHY_LEVELS = (
    "division",
    "super_department",
    "department",
    "category",
    "subcategory",
)

HIERARCHY_FIELDS = tuple(f"{level}_id" for level in HIERARCHY_LEVELS)

# Raw price-point fields, in canonical order. "price" is the live site price,
# "cost" the supplier cost; the rest are reference prices from other channels.
PRICE_FIELDS = (
    "price",
    "cost",
    "competitor_price",
    "second_competitor_price",
    "third_competitor_price",
    "store_price",
    "marketplace_price",
    "list_price",
    "msrp",
    "map_price",
    "promo_price",
    "clearance_price",
)

TIME_SERIES_FIELDS = ("avg_hist_price", "hist_price_std", "pct_price_swing")
BINARY_FIELDS = ("is_promo", "is_bundle", "is_marketplace", "is_clearance")
CATEGORICAL_FIELDS = ("promotion_type", "pricing_algo_type")
OTHER_NUMERIC_FIELDS = ("inventory", "avg_rating", "unit_count")


class RecordError(ValueError):
    """Raised when a raw row cannot be turned into a valid ItemRecord."""


@dataclass
class ItemRecord:
    item_id: str
    division_id: Optional[int] = None
    super_department_id: Optional[int] = None
    department_id: Optional[int] = None
    category_id: Optional[int] = None
    subcategory_id: Optional[int] = None

    price: Optional[float] = None
    cost: Optional[float] = None
    competitor_price: Optional[float] = None
    second_competitor_price: Optional[float] = None
    third_competitor_price: Optional[float] = None
    store_price: Optional[float] = None
    marketplace_price: Optional[float] = None
    list_price: Optional[float] = None
    msrp: Optional[float] = None
    map_price: Optional[float] = None
    promo_price: Optional[float] = None
    clearance_price: Optional[float] = None

    avg_hist_price: Optional[float] = None
    hist_price_std: Optional[float] = None
    pct_price_swing: Optional[float] = None

    is_promo: bool = False
    is_bundle: bool = False
    is_marketplace: bool = False
    is_clearance: bool = False

    promotion_type: Optional[int] = None
    pricing_algo_type: Optional[int] = None

    inventory: Optional[int] = None
    avg_rating: Optional[float] = None
    unit_count: int = 1

    def hierarchy_path(self) -> tuple[Optional[int], ...]:
        """Node ids from division down to subcategory."""
        return (
            self.division_id,
            self.super_department_id,
            self.department_id,
            self.category_id,
            self.subcategory_id,
        )

    def node_id(self, level: str) -> Optional[int]:
        return getattr(self, f"{level}_id")

    def to_dict(self) -> dict:
        """Plain-dict form with None for missing fields (JSON-ready)."""
        return asdict(self)


_FLOAT_FIELDS = frozenset(PRICE_FIELDS + TIME_SERIES_FIELDS + ("avg_rating",))
_INT_FIELDS = frozenset(
    HIERARCHY_FIELDS + CATEGORICAL_FIELDS + ("inventory",)
)
_BOOL_FIELDS = frozenset(BINARY_FIELDS)
_KNOWN_FIELDS = frozenset(f.name for f in fields(ItemRecord))

_TRUTHY = {"1", "true", "t", "yes", "y"}
_FALSY = {"0", "false", "f", "no", "n", ""}


def _coerce_bool(name: str, value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    text = str(value).strip().lower()
    if text in _TRUTHY:
        return True
    if text in _FALSY:
        return False
    raise RecordError(f"field {name!r}: cannot parse boolean from {value!r}")


def parse_record(raw: dict) -> ItemRecord:
    """Build a validated ItemRecord from a plain dict (JSON row or CSV row).

    Unknown keys are rejected, missing values may be absent, None, or "" in
    CSV form. Raises RecordError on type or invariant violations.
    """
    if "item_id" not in raw or raw["item_id"] in (None, ""):
        raise RecordError("missing item_id")

    kwargs: dict = {"item_id": str(raw["item_id"])}
    for name, value in raw.items():
        if name == "item_id":
            continue
        if name not in _KNOWN_FIELDS:
            raise RecordError(f"unknown field {name!r}")
        if value is None or value == "":
            continue
        try:
            if name in _BOOL_FIELDS:
                kwargs[name] = _coerce_bool(name, value)
            elif name in _INT_FIELDS:
                kwargs[name] = int(value)
            elif name == "unit_count":
                kwargs[name] = int(value)
            else:
                kwargs[name] = float(value)
        except (TypeError, ValueError) as exc:
            raise RecordError(f"field {name!r}: {exc}") from exc

    record = ItemRecord(**kwargs)
    _validate(record)
    return record


def _validate(record: ItemRecord) -> None:
    for name in PRICE_FIELDS:
        value = getattr(record, name)
        if value is None:
            continue
        if not math.isfinite(value) or value < 0:
            raise RecordError(f"field {name!r}: currency must be finite and >= 0, got {value}")
    if record.inventory is not None and record.inventory < 0:
        raise RecordError(f"inventory must be >= 0, got {record.inventory}")
    if record.unit_count < 1:
        raise RecordError(f"unit_count must be >= 1, got {record.unit_count}")
    if record.avg_rating is not None and not (0.0 <= record.avg_rating <= 5.0):
        raise RecordError(f"avg_rating must be in [0, 5], got {record.avg_rating}")
    for name in TIME_SERIES_FIELDS:
        value = getattr(record, name)
        if value is not None and not math.isfinite(value):
            raise RecordError(f"field {name!r}: must be finite, got {value}")


def read_jsonl(path: str | Path) -> Iterator[ItemRecord]:
    """Yield records from a line-delimited JSON file, one object per line."""
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"line {line_no}: invalid JSON: {exc}") from exc
            yield parse_record(raw)


def write_jsonl(records: Iterable[ItemRecord], path: str | Path) -> int:
    """Write records as line-delimited JSON; returns the row count."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict()) + "\n")
            count += 1
    return count


def read_csv(path: str | Path) -> Iterator[ItemRecord]:
    """Yield records from a CSV file with a header row; empty cells are missing."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            yield parse_record(row)


def write_csv(records: Iterable[ItemRecord], path: str | Path) -> int:
    names = [f.name for f in fields(ItemRecord)]
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=names)
        writer.writeheader()
        for record in records:
            row = record.to_dict()
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
            count += 1
    return count
