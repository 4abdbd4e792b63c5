"""Command-line client: data generation, training, batch scoring, serving."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from .alerts import AlertStore
from .batch import batch_score
from .bundle import load_latest, publish_bundle
from .datagen import (
    CatalogConfig,
    LabeledDataset,
    build_hierarchy,
    generate_catalog,
    read_labels,
    train_test_split,
    write_dataset,
)
from .forest import IsolationForestConfig, RandomForestConfig
from .impact import RankedAlertRow
from .records import read_jsonl
from .training import TrainConfig, train_bundle


@click.group()
def main():
    """Pricing anomaly detection toolkit."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--n-normal", default=200_000, show_default=True)
@click.option("--n-anomalies", default=200, show_default=True)
@click.option("--anomaly-rate", default=None, type=float, help="Overrides --n-anomalies.")
@click.option("--seed", default=7, show_default=True)
@click.option("--split/--no-split", default=True, show_default=True,
              help="Also write train/ and test/ subdirectories.")
@click.option("--test-rate", default=0.001, show_default=True,
              help="Anomaly rate of the test split.")
def datagen(out_dir: Path, n_normal: int, n_anomalies: int, anomaly_rate, seed: int,
            split: bool, test_rate: float):
    """Generate the labeled synthetic catalog."""
    config = CatalogConfig(
        n_normal=n_normal,
        n_anomalies=None if anomaly_rate is not None else n_anomalies,
        anomaly_rate=anomaly_rate,
        seed=seed,
    )
    dataset = generate_catalog(config)
    write_dataset(dataset, out_dir)
    click.echo(f"wrote {len(dataset)} records ({int(dataset.labels.sum())} anomalies) to {out_dir}")
    if split:
        train, test = train_test_split(dataset, test_rate=test_rate, seed=seed)
        write_dataset(train, out_dir / "train")
        write_dataset(test, out_dir / "test")
        click.echo(f"split: train={len(train)} test={len(test)}")


def _load_labeled(data_dir: Path) -> LabeledDataset:
    records = list(read_jsonl(data_dir / "records.jsonl"))
    label_map = read_labels(data_dir / "labels.csv")
    labels = np.array([label_map[r.item_id] for r in records], dtype=np.int64)
    return LabeledDataset(
        records=records,
        labels=labels,
        anomaly_kinds={},
        pre_injection={},
        hierarchy=build_hierarchy(),
    )


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, path_type=Path),
              help="Directory with records.jsonl and labels.csv.")
@click.option("--bundle-dir", required=True, type=click.Path(path_type=Path))
@click.option("--version", required=True)
@click.option("--fit-level", default="department", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--rf/--no-rf", "with_rf", default=True, show_default=True)
@click.option("--iforest/--no-iforest", "with_iforest", default=True, show_default=True)
@click.option("--rf-trees", default=100, show_default=True)
@click.option("--rf-depth", default=20, show_default=True)
def train(data_dir: Path, bundle_dir: Path, version: str, fit_level: str, seed: int,
          with_rf: bool, with_iforest: bool, rf_trees: int, rf_depth: int):
    """Fit models on a labeled dataset and publish a versioned bundle."""
    dataset = _load_labeled(data_dir)
    config = TrainConfig(
        fit_level=fit_level,
        seed=seed,
        fit_rf=with_rf,
        fit_iforest=with_iforest,
        rf=RandomForestConfig(n_trees=rf_trees, max_depth=rf_depth, seed=seed),
        iforest=IsolationForestConfig(seed=seed),
    )
    bundle = train_bundle(dataset.records, dataset.labels, version=version, config=config)
    path = publish_bundle(bundle, bundle_dir)
    click.echo(f"published bundle {version} at {path}")
    click.echo(json.dumps(bundle.threshold_info, indent=2))


@main.command("batch-score")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--bundle-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--capacity", default=100, show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path(path_type=Path))
@click.option("--store", "store_path", default=None, type=click.Path(path_type=Path),
              help="Also ingest the alerts into this alert store file.")
@click.option("--batch-id", default=None,
              help="Idempotency key; defaults to a digest of the input file.")
def batch_score_cmd(input_path: Path, bundle_dir: Path, capacity: int, output_path: Path,
                    store_path, batch_id):
    """Score a record file, write capacity-capped ranked alerts."""
    bundle = load_latest(bundle_dir)
    summary = batch_score(input_path, bundle, capacity, output_path)
    click.echo(json.dumps({k: v for k, v in summary.items() if k != "gnb_score_histogram"},
                          indent=2))
    if store_path is not None:
        if batch_id is None:
            batch_id = hashlib.sha256(input_path.read_bytes()).hexdigest()[:16]
        rows = []
        with open(output_path, "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    rows.append(RankedAlertRow.from_dict(json.loads(line)))
        created = AlertStore(store_path).ingest(
            rows, batch_id=batch_id, model_version=bundle.version
        )
        click.echo(f"ingested {len(created)} alerts into {store_path} (batch {batch_id})")
    if not summary["ok"]:
        click.echo("too many malformed rows", err=True)
        sys.exit(2)


@main.command()
@click.option("--bundle-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--ttl-seconds", default=7200, show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", "store_path", default=None, type=click.Path(path_type=Path))
@click.option("--frontend", "frontend_dir", default=None, type=click.Path(path_type=Path),
              help="Serve a built frontend from /ui.")
def serve(bundle_dir: Path, ttl_seconds: float, port: int, host: str, store_path, frontend_dir):
    """Run the scoring and review HTTP service."""
    import uvicorn

    from .api import create_app

    app = create_app(
        bundle_dir,
        store_path=store_path,
        ttl_seconds=ttl_seconds,
        frontend_dir=frontend_dir,
    )
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("experiment", type=click.Choice(["models", "hierarchy", "rates"]))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, path_type=Path),
              help="Directory with train/ and test/ splits from datagen.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--folds", default=5, show_default=True)
def experiment(experiment: str, data_dir: Path, out_dir: Path, seed: int, folds: int):
    """Run an offline evaluation protocol and write JSON + CSV reports."""
    from . import experiments as exp

    train_ds = _load_labeled(data_dir / "train")
    test_ds = _load_labeled(data_dir / "test")
    out_dir.mkdir(parents=True, exist_ok=True)

    if experiment == "hierarchy":
        reports = exp.hierarchy_comparison(train_ds, test_ds, k=folds, seed=seed)
        exp.reports_to_json(reports, out_dir / "hierarchy.json")
        exp.reports_to_csv(reports, out_dir / "hierarchy.csv")
        for level, r in reports.items():
            click.echo(f"{level:18s} precision={r.precision:.4f} recall={r.recall:.4f} "
                       f"f1={r.f_beta:.4f} auc={r.auc_pr:.4f}")
        return

    scores = exp.score_all_models(train_ds, test_ds, seed=seed)
    if experiment == "models":
        reports = exp.model_comparison(scores, test_ds.labels, k=folds, seed=seed)
        exp.reports_to_json(reports, out_dir / "models.json")
        exp.reports_to_csv(reports, out_dir / "models.csv")
        for name, r in reports.items():
            click.echo(f"{name:10s} precision={r.precision:.4f} recall={r.recall:.4f} "
                       f"f1={r.f_beta:.4f} auc={r.auc_pr:.4f}")
    else:
        sweeps = exp.rate_sweep_comparison(scores, test_ds.labels, k=folds, seed=seed)
        exp.sweep_to_csv(sweeps, out_dir / "rates.csv")
        for name, points in sweeps.items():
            line = " ".join(f"{rate:.3f}:{f:.3f}" for rate, f in points)
            click.echo(f"{name:10s} {line}")


if __name__ == "__main__":
    main()
