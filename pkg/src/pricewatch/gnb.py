"""Per-hierarchy-node Gaussian density model over the baseline log features.

One (mu, sigma) table is fitted per node at a chosen hierarchy level, with a
fallback chain for thin or unseen nodes: a node with too few rows inherits the
parameters of its parent node, recursively, and anything unresolvable scores
against a global model fitted on all rows. The anomaly score of a record is
the sum of squared z-scores over its non-missing log features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import FeatureSchema, baseline_log_features, baseline_log_matrix
from .records import HIERARCHY_LEVELS, ItemRecord

# Nodes with fewer rows than this inherit their parent's parameters.
MIN_NODE_SAMPLES = 9
# Standard deviations are clipped from below to keep scores finite.
SIGMA_FLOOR = 0.01

_LOG_2PI = math.log(2.0 * math.pi)


class GnbFitError(ValueError):
    """Fitting is impossible (e.g. no log feature is ever computable)."""


@dataclass(frozen=True)
class GnbNodeParams:
    """Gaussian parameters for one hierarchy node (or the global root)."""

    level: str  # hierarchy level name, or "global"
    node_id: int  # -1 for the global root
    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    n_samples: int

    @property
    def key(self) -> str:
        return f"{self.level}:{self.node_id}" if self.level != "global" else "global"


@dataclass
class GnbModel:
    """Fitted per-node parameter tables plus decision thresholds.

    Immutable after fitting; epsilon is assigned by threshold selection and
    epsilon_s (the per-feature explanation threshold) defaults to epsilon / 4.
    """

    schema: FeatureSchema
    fit_level: str
    params: dict[tuple[str, int], GnbNodeParams]
    global_params: GnbNodeParams
    epsilon: Optional[float] = None
    epsilon_s: Optional[float] = None

    def set_epsilon(self, epsilon: float, epsilon_s: Optional[float] = None) -> None:
        """Set the anomaly threshold; explanation threshold defaults to a quarter."""
        self.epsilon = epsilon
        self.epsilon_s = epsilon_s if epsilon_s is not None else epsilon / 4.0

    def resolve(self, record: ItemRecord) -> GnbNodeParams:
        """Exact node match at fit level, then ancestors, then global."""
        start = HIERARCHY_LEVELS.index(self.fit_level)
        for level in HIERARCHY_LEVELS[start::-1]:
            node = record.node_id(level)
            if node is not None:
                found = self.params.get((level, node))
                if found is not None:
                    return found
        return self.global_params


@dataclass
class ScoreBreakdown:
    """Total anomaly score with its per-feature decomposition."""

    total: float
    per_feature: list[Optional[float]]
    used_node: str
    all_missing: bool = False


def _grouped_stats(
    node_ids: np.ndarray, X: np.ndarray, sigma_floor: float
) -> dict[int, tuple[np.ndarray, np.ndarray, int]]:
    """Per-node (mu, sigma, n_rows) over non-missing values, one pass per level."""
    present = node_ids >= 0
    ids = node_ids[present]
    Xp = X[present]
    if ids.size == 0:
        return {}
    order = np.argsort(ids, kind="stable")
    ids_sorted = ids[order]
    Xs = Xp[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(ids_sorted)) + 1))
    uniq = ids_sorted[starts]
    n_rows = np.diff(np.concatenate((starts, [ids_sorted.size])))

    valid = ~np.isnan(Xs)
    zeroed = np.where(valid, Xs, 0.0)
    s1 = np.add.reduceat(zeroed, starts, axis=0)
    s2 = np.add.reduceat(zeroed * zeroed, starts, axis=0)
    cnt = np.add.reduceat(valid.astype(np.float64), starts, axis=0)

    with np.errstate(invalid="ignore", divide="ignore"):
        mu = s1 / cnt
        var = np.maximum(s2 / cnt - mu * mu, 0.0)
        sigma = np.maximum(np.sqrt(var), sigma_floor)
    mu[cnt == 0] = np.nan
    sigma[cnt == 0] = np.nan

    return {
        int(uniq[k]): (mu[k], sigma[k], int(n_rows[k]))
        for k in range(uniq.size)
    }


def fit_gnb(
    records: Sequence[ItemRecord],
    schema: FeatureSchema,
    fit_level: str = "department",
    min_node_samples: int = MIN_NODE_SAMPLES,
    sigma_floor: float = SIGMA_FLOOR,
) -> GnbModel:
    """Fit per-node Gaussian parameters at fit_level with ancestor fallback.

    Nodes with fewer than min_node_samples rows take their parent's assembled
    parameters, recursively up to the global fit. Features never observed at a
    node inherit the parent's per-feature statistics.
    """
    if not records:
        raise GnbFitError("no training records")
    if fit_level not in HIERARCHY_LEVELS:
        raise GnbFitError(f"unknown hierarchy level {fit_level!r}")

    X = baseline_log_matrix(records, schema)
    valid_counts = (~np.isnan(X)).sum(axis=0)
    if valid_counts.sum() == 0:
        raise GnbFitError("no log features computable from training data (cost always missing?)")

    g_s1 = np.nansum(X, axis=0)
    g_s2 = np.nansum(X * X, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        g_mu = g_s1 / valid_counts
        g_var = np.maximum(g_s2 / valid_counts - g_mu * g_mu, 0.0)
        g_sigma = np.maximum(np.sqrt(g_var), sigma_floor)
    g_mu = np.where(valid_counts > 0, g_mu, np.nan)
    g_sigma = np.where(valid_counts > 0, g_sigma, np.nan)
    global_params = GnbNodeParams(
        level="global",
        node_id=-1,
        mu=tuple(float(v) for v in g_mu),
        sigma=tuple(float(v) for v in g_sigma),
        n_samples=len(records),
    )

    # Node id arrays per level (missing ids encoded as -1) and child -> parent
    # links, derived from the records themselves.
    level_ids: dict[str, np.ndarray] = {}
    for level in HIERARCHY_LEVELS:
        col = np.fromiter(
            (r.node_id(level) if r.node_id(level) is not None else -1 for r in records),
            dtype=np.int64,
            count=len(records),
        )
        level_ids[level] = col

    fit_idx = HIERARCHY_LEVELS.index(fit_level)
    levels_used = HIERARCHY_LEVELS[: fit_idx + 1]

    parent_of: dict[str, dict[int, int]] = {}
    for i in range(1, len(levels_used)):
        child_col = level_ids[levels_used[i]]
        parent_col = level_ids[levels_used[i - 1]]
        links: dict[int, int] = {}
        for c, p in zip(child_col.tolist(), parent_col.tolist()):
            if c >= 0 and c not in links:
                links[c] = p
        parent_of[levels_used[i]] = links

    assembled: dict[tuple[str, int], GnbNodeParams] = {}
    for i, level in enumerate(levels_used):
        stats = _grouped_stats(level_ids[level], X, sigma_floor)
        for node, (mu, sigma, n_rows) in stats.items():
            if i == 0:
                parent = global_params
            else:
                pid = parent_of[level].get(node, -1)
                parent = assembled.get((levels_used[i - 1], pid), global_params)
            if n_rows < min_node_samples:
                assembled[(level, node)] = GnbNodeParams(
                    level=level, node_id=node, mu=parent.mu, sigma=parent.sigma,
                    n_samples=parent.n_samples,
                )
                continue
            p_mu = np.asarray(parent.mu)
            p_sigma = np.asarray(parent.sigma)
            filled_mu = np.where(np.isnan(mu), p_mu, mu)
            filled_sigma = np.where(np.isnan(sigma), p_sigma, sigma)
            assembled[(level, node)] = GnbNodeParams(
                level=level,
                node_id=node,
                mu=tuple(float(v) for v in filled_mu),
                sigma=tuple(float(v) for v in filled_sigma),
                n_samples=n_rows,
            )

    return GnbModel(
        schema=schema,
        fit_level=fit_level,
        params=assembled,
        global_params=global_params,
    )


def score_gnb(model: GnbModel, record: ItemRecord) -> ScoreBreakdown:
    """Sum of squared z-scores over the record's non-missing log features.

    Missing features contribute nothing; a record with no scoreable feature
    gets total 0.0 and the all_missing flag.
    """
    params = model.resolve(record)
    xs = baseline_log_features(record, model.schema)
    per_feature: list[Optional[float]] = []
    total = 0.0
    any_scored = False
    for x, mu, sigma in zip(xs, params.mu, params.sigma):
        if x is None or mu != mu:  # NaN parameter: feature never observed
            per_feature.append(None)
            continue
        z = (x - mu) / sigma
        a = z * z
        per_feature.append(a)
        total += a
        any_scored = True
    return ScoreBreakdown(
        total=total,
        per_feature=per_feature,
        used_node=params.key,
        all_missing=not any_scored,
    )


def predict_gnb(model: GnbModel, record: ItemRecord) -> tuple[bool, float]:
    """Anomaly decision: score strictly above the configured threshold."""
    if model.epsilon is None:
        raise ValueError("model has no threshold set; run threshold selection first")
    breakdown = score_gnb(model, record)
    return breakdown.total > model.epsilon, breakdown.total


def density_gnb(model: GnbModel, record: ItemRecord) -> float:
    """Log density under the per-feature Gaussians (independent product).

    Computed directly from the Gaussian log-pdfs; zero non-missing features
    give log p = 0 by the empty-product convention.
    """
    params = model.resolve(record)
    xs = baseline_log_features(record, model.schema)
    logp = 0.0
    for x, mu, sigma in zip(xs, params.mu, params.sigma):
        if x is None or mu != mu:
            continue
        z = (x - mu) / sigma
        logp += -0.5 * _LOG_2PI - math.log(sigma) - 0.5 * z * z
    return logp


def score_gnb_many(model: GnbModel, records: Sequence[ItemRecord]) -> np.ndarray:
    """Total scores for a batch of records (same math as score_gnb, row-wise)."""
    return np.array([score_gnb(model, r).total for r in records], dtype=np.float64)


def gnb_to_dict(model: GnbModel) -> dict:
    """Serializable form, excluding the schema (stored separately in bundles)."""
    return {
        "fit_level": model.fit_level,
        "epsilon": model.epsilon,
        "epsilon_s": model.epsilon_s,
        "global": {
            "mu": list(model.global_params.mu),
            "sigma": list(model.global_params.sigma),
            "n_samples": model.global_params.n_samples,
        },
        "nodes": [
            {
                "level": p.level,
                "node_id": p.node_id,
                "mu": list(p.mu),
                "sigma": list(p.sigma),
                "n_samples": p.n_samples,
            }
            for p in model.params.values()
        ],
    }


def gnb_from_dict(doc: dict, schema: FeatureSchema) -> GnbModel:
    global_params = GnbNodeParams(
        level="global",
        node_id=-1,
        mu=tuple(doc["global"]["mu"]),
        sigma=tuple(doc["global"]["sigma"]),
        n_samples=doc["global"]["n_samples"],
    )
    params = {}
    for node in doc["nodes"]:
        p = GnbNodeParams(
            level=node["level"],
            node_id=node["node_id"],
            mu=tuple(node["mu"]),
            sigma=tuple(node["sigma"]),
            n_samples=node["n_samples"],
        )
        params[(p.level, p.node_id)] = p
    model = GnbModel(
        schema=schema,
        fit_level=doc["fit_level"],
        params=params,
        global_params=global_params,
    )
    model.epsilon = doc["epsilon"]
    model.epsilon_s = doc["epsilon_s"]
    return model
