"""Seeded synthetic retail catalog with labeled anomaly injection.

Normal records are generated coherently: every item hangs off a five-level
hierarchy, price medians vary by subcategory, margin centers vary by
department, and reference prices (competitors, store, marketplace, list)
track the live price with channel-specific noise. A small configurable slice
of normals are "deviants": legitimately odd rows such as loss-leader promos
and clearance markdowns whose margins look alarming but whose flags and promo
fields explain them. They are what makes the unsupervised models' precision
realistic instead of perfect.

Anomalies are injected by corrupting fresh normal rows with one of five
error classes (decimal shifts on cost or price, price/cost swap, stale
competitor feed, per-unit price entered for a multi-pack), mirroring the data
errors a pricing pipeline actually sees.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .records import HIERARCHY_LEVELS, ItemRecord

ANOMALY_KINDS = (
    "decimal_shift_cost",
    "decimal_shift_price",
    "price_cost_swap",
    "stale_competitor",
    "unit_error",
)

_COMPETITOR_FIELDS = ("competitor_price", "second_competitor_price", "third_competitor_price")
_LEVEL_ID_OFFSET = 1_000_000


class DatagenError(ValueError):
    pass


@dataclass(frozen=True)
class Hierarchy:
    """Fixed catalog tree; paths[s] is the id path for subcategory index s."""

    branching: tuple[int, ...]
    paths: np.ndarray  # (n_subcategories, 5) int64, division first

    @property
    def n_subcategories(self) -> int:
        return self.paths.shape[0]

    def counts(self) -> dict[str, int]:
        return {
            level: int(np.unique(self.paths[:, i]).size)
            for i, level in enumerate(HIERARCHY_LEVELS)
        }

    def contains_path(self, path: Sequence[Optional[int]]) -> bool:
        if any(p is None for p in path):
            return False
        return bool((self.paths == np.asarray(path, dtype=np.int64)).all(axis=1).any())


def build_hierarchy(branching: Sequence[int] = (7, 3, 3, 3, 3)) -> Hierarchy:
    """Build the id tables for a tree with the given per-level branching."""
    if len(branching) != 5 or any(b < 1 for b in branching):
        raise DatagenError(f"branching needs 5 positive factors, got {branching}")
    n_sub = int(np.prod(branching))
    sub_idx = np.arange(n_sub)
    cat_idx = sub_idx // branching[4]
    dep_idx = cat_idx // branching[3]
    sup_idx = dep_idx // branching[2]
    div_idx = sup_idx // branching[1]
    cols = []
    for level, idx in enumerate((div_idx, sup_idx, dep_idx, cat_idx, sub_idx)):
        cols.append((level + 1) * _LEVEL_ID_OFFSET + idx + 1)
    return Hierarchy(branching=tuple(branching), paths=np.stack(cols, axis=1).astype(np.int64))


@dataclass
class CatalogConfig:
    """Knobs of the generator; defaults are the desk-scale dataset."""

    n_normal: int = 200_000
    n_anomalies: Optional[int] = 200
    anomaly_rate: Optional[float] = None  # alternative to n_anomalies
    seed: int = 7
    branching: tuple[int, ...] = (7, 3, 3, 3, 3)

    # price level: subcategory medians are log-normal, items scatter around them
    price_median_log_mean: float = math.log(25.0)
    price_median_log_sd: float = 0.55
    price_item_log_sd: float = 0.30

    # margin: per-department center for log(price / cost), heavy-tailed item noise
    margin_log_low: float = 0.10
    margin_log_high: float = 0.45
    margin_noise_sd: float = 0.06
    margin_noise_df: float = 4.0  # Student-t degrees of freedom

    # reference-price noise and presence probabilities
    competitor_noise_sd: float = 0.05
    competitor_presence: tuple[float, float, float] = (0.85, 0.5, 0.3)

    # flags and legit-weird rows
    promo_probability: float = 0.15
    clearance_probability: float = 0.05
    deviant_rate: float = 0.02
    loss_leader_low: float = 0.50   # deepest legit below-cost price, as cost fraction
    loss_leader_high: float = 0.95
    high_margin_log_low: float = 0.8   # legit negotiated-cost outliers: log(price/cost)
    high_margin_log_high: float = 1.6

    inventory_log_mean: float = 3.0
    inventory_log_sd: float = 1.2

    # optional unlabeled corruption of the normal class, off by default
    unlabeled_contamination: float = 0.0

    anomaly_kinds: tuple[str, ...] = ANOMALY_KINDS

    def resolved_anomaly_count(self) -> int:
        if self.anomaly_rate is not None:
            return round(self.n_normal * self.anomaly_rate)
        if self.n_anomalies is None:
            raise DatagenError("set n_anomalies or anomaly_rate")
        return self.n_anomalies

    def validate(self) -> None:
        if self.n_normal <= 0:
            raise DatagenError("n_normal must be positive")
        n_anom = self.resolved_anomaly_count()
        if n_anom < 0:
            raise DatagenError("anomaly count must be >= 0")
        if self.anomaly_rate is not None and not (0.0 < self.anomaly_rate < 0.5):
            raise DatagenError("anomaly_rate must be in (0, 0.5)")
        unknown = set(self.anomaly_kinds) - set(ANOMALY_KINDS)
        if unknown:
            raise DatagenError(f"unknown anomaly kinds: {sorted(unknown)}")
        if not self.anomaly_kinds and n_anom > 0:
            raise DatagenError("no anomaly kinds enabled")


@dataclass
class LabeledDataset:
    records: list[ItemRecord]
    labels: np.ndarray  # int64, 1 for injected anomalies
    anomaly_kinds: dict[str, str]  # item_id -> kind, positives only
    pre_injection: dict[str, ItemRecord]  # item_id -> untouched twin, positives only
    hierarchy: Hierarchy

    def __len__(self) -> int:
        return len(self.records)


def _presence(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    return rng.random(n) < p


def _generate_rows(n: int, config: CatalogConfig, hier: Hierarchy, rng: np.random.Generator,
                   id_prefix: str) -> list[ItemRecord]:
    n_sub = hier.n_subcategories
    n_dep = int(np.prod(config.branching[:3]))

    # Per-node parameters: price level by subcategory, margin by department.
    sub_price_median = np.exp(
        rng.normal(config.price_median_log_mean, config.price_median_log_sd, size=n_sub)
    )
    dep_margin_center = rng.uniform(config.margin_log_low, config.margin_log_high, size=n_dep)

    sub = rng.integers(0, n_sub, size=n)
    paths = hier.paths[sub]
    dep_index = (paths[:, 2] - 3 * _LEVEL_ID_OFFSET) - 1

    price = sub_price_median[sub] * np.exp(rng.normal(0.0, config.price_item_log_sd, size=n))
    log_margin = dep_margin_center[dep_index] + (
        rng.standard_t(config.margin_noise_df, size=n) * config.margin_noise_sd
    )
    cost = price / np.exp(log_margin)

    comp_sds = (1.0, 1.6, 2.2)
    competitors = []
    for j in range(3):
        vals = price * np.exp(rng.normal(0.0, config.competitor_noise_sd * comp_sds[j], size=n))
        present = _presence(rng, n, config.competitor_presence[j])
        competitors.append((vals, present))

    store_price = price * np.exp(rng.normal(0.0, 0.04, size=n))
    store_present = _presence(rng, n, 0.7)
    marketplace_price = price * np.exp(rng.normal(0.0, 0.08, size=n))
    marketplace_present = _presence(rng, n, 0.6)
    list_price = price * np.exp(np.abs(rng.normal(0.0, 0.10, size=n)))
    list_present = _presence(rng, n, 0.8)
    msrp = price * np.exp(np.abs(rng.normal(0.08, 0.06, size=n)))
    msrp_present = _presence(rng, n, 0.5)
    map_price = price * np.exp(-np.abs(rng.normal(0.03, 0.03, size=n)))
    map_present = _presence(rng, n, 0.3)

    is_promo = _presence(rng, n, config.promo_probability)
    promo_discount = rng.uniform(0.05, 0.30, size=n)
    is_clearance = _presence(rng, n, config.clearance_probability)
    clearance_factor = rng.uniform(0.60, 0.90, size=n)
    is_bundle = _presence(rng, n, 0.08)
    is_marketplace = _presence(rng, n, 0.20)

    avg_hist_price = price * np.exp(rng.normal(0.0, 0.05, size=n))
    hist_price_std = price * np.abs(rng.normal(0.03, 0.015, size=n))
    pct_price_swing = rng.normal(0.0, 2.0, size=n)
    hist_present = _presence(rng, n, 0.9)

    inventory = np.round(
        np.exp(rng.normal(config.inventory_log_mean, config.inventory_log_sd, size=n))
    ).astype(np.int64)
    rating = np.round(rng.uniform(1.0, 5.0, size=n), 1)
    rating_present = _presence(rng, n, 0.7)
    multi = _presence(rng, n, 0.2)
    unit_count = np.where(multi, rng.integers(2, 13, size=n), 1)

    promotion_type = np.where(is_promo, rng.integers(1, 5, size=n), 0)
    pricing_algo_type = rng.integers(0, 3, size=n)

    # Deviants: legitimate but extreme pricing. Loss-leader promos price below
    # cost and clearance rows mark down toward cost (flags and promo fields
    # stay consistent with the markdown). High-margin rows carry a negotiated
    # cost far below the usual margin structure of their department while
    # every customer-facing price stays ordinary.
    deviant = _presence(rng, n, config.deviant_rate)
    deviant_kind = rng.integers(0, 3, size=n)  # 0 loss leader, 1 clearance, 2 high margin
    loss_factor = rng.uniform(config.loss_leader_low, config.loss_leader_high, size=n)
    clear_factor = rng.uniform(0.60, 1.05, size=n)
    margin_boost = np.exp(
        rng.uniform(config.high_margin_log_low, config.high_margin_log_high, size=n)
    )
    comp_tracks = rng.random((n, 3)) < 0.7

    ll = deviant & (deviant_kind == 0)
    price = np.where(ll, cost * loss_factor, price)
    is_promo = is_promo | ll
    promotion_type = np.where(ll & (promotion_type == 0), 1, promotion_type)

    cl = deviant & (deviant_kind == 1)
    price = np.where(cl, cost * clear_factor, price)
    is_clearance = is_clearance | cl

    hm = deviant & (deviant_kind == 2)
    cost = np.where(hm, price / margin_boost, cost)

    promo_price = price * (1.0 - promo_discount)
    promo_price = np.where(ll, price, promo_price)
    clearance_price = price * clearance_factor
    clearance_price = np.where(cl, price, clearance_price)

    # Competitors mostly follow a markdown (the market reacts), other channels lag.
    markdown = ll | cl
    for j in range(3):
        vals, present = competitors[j]
        tracked = price * np.exp(rng.normal(0.0, config.competitor_noise_sd * comp_sds[j], size=n))
        competitors[j] = (np.where(markdown & comp_tracks[:, j], tracked, vals), present)
    store_price = np.where(markdown, price * np.exp(rng.normal(0.0, 0.04, size=n)), store_price)

    records: list[ItemRecord] = []
    for i in range(n):
        records.append(
            ItemRecord(
                item_id=f"{id_prefix}{i:07d}",
                division_id=int(paths[i, 0]),
                super_department_id=int(paths[i, 1]),
                department_id=int(paths[i, 2]),
                category_id=int(paths[i, 3]),
                subcategory_id=int(paths[i, 4]),
                price=float(price[i]),
                cost=float(cost[i]),
                competitor_price=float(competitors[0][0][i]) if competitors[0][1][i] else None,
                second_competitor_price=float(competitors[1][0][i]) if competitors[1][1][i] else None,
                third_competitor_price=float(competitors[2][0][i]) if competitors[2][1][i] else None,
                store_price=float(store_price[i]) if store_present[i] else None,
                marketplace_price=float(marketplace_price[i]) if marketplace_present[i] else None,
                list_price=float(list_price[i]) if list_present[i] else None,
                msrp=float(msrp[i]) if msrp_present[i] else None,
                map_price=float(map_price[i]) if map_present[i] else None,
                promo_price=float(promo_price[i]) if is_promo[i] else None,
                clearance_price=float(clearance_price[i]) if is_clearance[i] else None,
                avg_hist_price=float(avg_hist_price[i]) if hist_present[i] else None,
                hist_price_std=float(hist_price_std[i]) if hist_present[i] else None,
                pct_price_swing=float(pct_price_swing[i]) if hist_present[i] else None,
                is_promo=bool(is_promo[i]),
                is_bundle=bool(is_bundle[i]),
                is_marketplace=bool(is_marketplace[i]),
                is_clearance=bool(is_clearance[i]),
                promotion_type=int(promotion_type[i]),
                pricing_algo_type=int(pricing_algo_type[i]),
                inventory=int(inventory[i]),
                avg_rating=float(min(rating[i], 5.0)) if rating_present[i] else None,
                unit_count=int(unit_count[i]),
            )
        )
    return records


def inject_anomaly(
    record: ItemRecord, kind: str, seed: int
) -> tuple[ItemRecord, str]:
    """Corrupt one record with the named error class.

    Returns the corrupted copy and the kind actually applied: a kind that
    does not apply to this record (no competitor present, single-unit item)
    falls back to a cost decimal shift.
    """
    if kind not in ANOMALY_KINDS:
        raise DatagenError(f"unknown anomaly kind {kind!r}")
    rng = np.random.default_rng(seed)

    if kind == "stale_competitor":
        present = [f for f in _COMPETITOR_FIELDS if getattr(record, f) is not None]
        if not present:
            kind = "decimal_shift_cost"
        else:
            target = present[rng.integers(len(present))]
            factor = float(rng.uniform(3.0, 20.0))
            return (
                dataclasses.replace(record, **{target: getattr(record, target) * factor}),
                "stale_competitor",
            )

    if kind == "unit_error":
        if record.unit_count < 2 or record.price is None:
            kind = "decimal_shift_cost"
        else:
            return (
                dataclasses.replace(record, price=record.price / record.unit_count),
                "unit_error",
            )

    if kind == "price_cost_swap":
        if record.price is None or record.cost is None:
            kind = "decimal_shift_cost"
        else:
            return (
                dataclasses.replace(record, price=record.cost, cost=record.price),
                "price_cost_swap",
            )

    factor = 10.0 if rng.random() < 0.5 else 0.1
    if kind == "decimal_shift_price":
        if record.price is not None:
            return dataclasses.replace(record, price=record.price * factor), "decimal_shift_price"
        kind = "decimal_shift_cost"

    if record.cost is None:
        raise DatagenError("record has no cost to shift")
    return dataclasses.replace(record, cost=record.cost * factor), "decimal_shift_cost"


def generate_catalog(config: CatalogConfig) -> LabeledDataset:
    """Generate the labeled catalog: normals first, injected anomalies last."""
    config.validate()
    hier = build_hierarchy(config.branching)
    rng = np.random.default_rng(config.seed)
    n_anom = config.resolved_anomaly_count()

    normals = _generate_rows(config.n_normal, config, hier, rng, id_prefix="N")
    bases = _generate_rows(n_anom, config, hier, rng, id_prefix="A") if n_anom else []

    if config.unlabeled_contamination > 0.0:
        n_contam = round(config.n_normal * config.unlabeled_contamination)
        hit = rng.choice(config.n_normal, size=n_contam, replace=False)
        for j, idx in enumerate(sorted(hit.tolist())):
            kind = config.anomaly_kinds[j % len(config.anomaly_kinds)]
            normals[idx], _ = inject_anomaly(
                normals[idx], kind, seed=config.seed * 2_000_029 + j
            )

    kinds: dict[str, str] = {}
    twins: dict[str, ItemRecord] = {}
    anomalies: list[ItemRecord] = []
    for i, base in enumerate(bases):
        kind = config.anomaly_kinds[i % len(config.anomaly_kinds)]
        corrupted, applied = inject_anomaly(base, kind, seed=config.seed * 1_000_003 + i)
        anomalies.append(corrupted)
        kinds[corrupted.item_id] = applied
        twins[corrupted.item_id] = base

    records = normals + anomalies
    labels = np.concatenate(
        (np.zeros(len(normals), dtype=np.int64), np.ones(len(anomalies), dtype=np.int64))
    )
    return LabeledDataset(
        records=records,
        labels=labels,
        anomaly_kinds=kinds,
        pre_injection=twins,
        hierarchy=hier,
    )


def train_test_split(
    dataset: LabeledDataset,
    test_rate: float = 0.001,
    seed: int = 0,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Split positives 50/50 and give the test side enough normals for test_rate."""
    labels = dataset.labels
    pos_idx = np.flatnonzero(labels == 1)
    neg_idx = np.flatnonzero(labels == 0)
    if pos_idx.size < 2:
        raise DatagenError("need at least 2 positives to split")

    rng = np.random.default_rng(seed)
    pos_perm = rng.permutation(pos_idx)
    neg_perm = rng.permutation(neg_idx)

    n_test_pos = pos_idx.size // 2
    test_pos = pos_perm[:n_test_pos]
    train_pos = pos_perm[n_test_pos:]

    n_test_neg = round(n_test_pos / test_rate) - n_test_pos
    if n_test_neg > neg_idx.size:
        raise DatagenError(
            f"not enough normals for test rate {test_rate}: need {n_test_neg}, have {neg_idx.size}"
        )
    test_neg = neg_perm[:n_test_neg]
    train_neg = neg_perm[n_test_neg:]

    def subset(idx: np.ndarray) -> LabeledDataset:
        idx = np.sort(idx)
        recs = [dataset.records[i] for i in idx]
        labs = labels[idx]
        ids = {r.item_id for r, l in zip(recs, labs) if l == 1}
        return LabeledDataset(
            records=recs,
            labels=labs,
            anomaly_kinds={k: v for k, v in dataset.anomaly_kinds.items() if k in ids},
            pre_injection={k: v for k, v in dataset.pre_injection.items() if k in ids},
            hierarchy=dataset.hierarchy,
        )

    train = subset(np.concatenate((train_pos, train_neg)))
    test = subset(np.concatenate((test_pos, test_neg)))
    return train, test


def write_dataset(dataset: LabeledDataset, out_dir: str | Path) -> None:
    """records.jsonl plus labels.csv (item_id, label, kind) in out_dir."""
    from .records import write_jsonl

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(dataset.records, out / "records.jsonl")
    with open(out / "labels.csv", "w", encoding="utf-8") as handle:
        handle.write("item_id,label,kind\n")
        for record, label in zip(dataset.records, dataset.labels):
            kind = dataset.anomaly_kinds.get(record.item_id, "")
            handle.write(f"{record.item_id},{int(label)},{kind}\n")


def read_labels(path: str | Path) -> dict[str, int]:
    labels = {}
    with open(path, "r", encoding="utf-8") as handle:
        next(handle)
        for line in handle:
            item_id, label, _ = line.rstrip("\n").split(",", 2)
            labels[item_id] = int(label)
    return labels
