"""Daily batch scoring job: whole-catalog ranking capped to review capacity.

Reads line-delimited JSON records, runs the combined ranking, writes the top
alerts and a run summary. Unparseable rows are skipped and counted; a run
with more than 1% malformed rows is reported as failed. Output is
deterministic for identical input and bundle.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .bundle import ModelBundle
from .impact import cap_alerts, combined_predict
from .records import RecordError, parse_record

MALFORMED_LIMIT = 0.01

_GNB_HIST_EDGES = (0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, float("inf"))


def _histogram(values, edges=_GNB_HIST_EDGES) -> dict:
    counts = [0] * (len(edges) - 1)
    for v in values:
        for b in range(len(edges) - 1):
            if edges[b] <= v < edges[b + 1]:
                counts[b] += 1
                break
    return {"edges": list(edges[:-1]), "counts": counts}


def batch_score(
    input_path: str | Path,
    bundle: ModelBundle,
    capacity: int,
    output_path: str | Path,
    summary_path: Optional[str | Path] = None,
) -> dict:
    """Score every row, write the capped ranked alerts, return the summary.

    The summary is also written as JSON (default: <output>.summary.json);
    summary["ok"] is False when the malformed-row fraction exceeds 1%.
    """
    input_path = Path(input_path)
    output_path = Path(output_path)
    summary_path = Path(summary_path) if summary_path else output_path.with_suffix(
        output_path.suffix + ".summary.json"
    )

    records = []
    n_lines = 0
    n_malformed = 0
    with open(input_path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            n_lines += 1
            try:
                records.append(parse_record(json.loads(line)))
            except (json.JSONDecodeError, RecordError):
                n_malformed += 1

    rows = combined_predict(
        records, bundle.gnb, bundle.rf, bundle.schema, tier_bounds=bundle.tier_bounds
    )
    alerts = cap_alerts(rows, capacity)

    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as handle:
        for row in alerts:
            handle.write(json.dumps(row.to_dict()) + "\n")

    n_anomalies = sum(1 for r in rows if r.is_anomaly)
    malformed_fraction = (n_malformed / n_lines) if n_lines else 0.0
    summary = {
        "ok": malformed_fraction <= MALFORMED_LIMIT,
        "model_version": bundle.version,
        "n_input_lines": n_lines,
        "n_scored": len(records),
        "n_malformed": n_malformed,
        "malformed_fraction": malformed_fraction,
        "n_anomalies": n_anomalies,
        "n_alerts_written": len(alerts),
        "capacity": capacity,
        "gnb_score_histogram": _histogram([r.score_gnb for r in rows]),
        "blocked_tier0_anomalies": sum(
            1 for r in rows if r.is_anomaly and r.priority_tier == 0
        ),
    }
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)
        handle.write("\n")
    return summary
