"""Versioned model bundles: the single artifact batch and streaming share.

A bundle holds the fitted schema, the density model, the tree ensembles and
every selected threshold. Bundles live in a directory laid out as
``bundles/<version>/bundle.bin`` with a ``LATEST`` pointer file; publishing
writes the bundle first and swaps the pointer atomically, so readers always
see a complete bundle. The serving cache reloads the latest bundle only when
its time-to-live has elapsed, never per request.
"""

from __future__ import annotations

import pickle
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .features import FeatureSchema
from .forest import IsolationForestModel, RandomForestModel
from .gnb import GnbModel, gnb_from_dict, gnb_to_dict
from .impact import DEFAULT_TIER_BOUNDS

BUNDLE_FORMAT_VERSION = 1
LATEST_POINTER = "LATEST"
BUNDLE_FILENAME = "bundle.bin"
DEFAULT_TTL_SECONDS = 7200.0


class BundleError(RuntimeError):
    pass


class BundleUnavailable(BundleError):
    """No bundle has ever been loadable from the directory."""


@dataclass
class ModelBundle:
    version: str
    created_at: float
    schema: FeatureSchema
    gnb: GnbModel
    iforest: Optional[IsolationForestModel] = None
    rf: Optional[RandomForestModel] = None
    tier_bounds: tuple[float, ...] = DEFAULT_TIER_BOUNDS
    threshold_info: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "format_version": BUNDLE_FORMAT_VERSION,
            "version": self.version,
            "created_at": self.created_at,
            "schema_json": self.schema.to_json(),
            "gnb": gnb_to_dict(self.gnb),
            "iforest": self.iforest.to_dict() if self.iforest else None,
            "rf": self.rf.to_dict() if self.rf else None,
            "tier_bounds": list(self.tier_bounds),
            "threshold_info": self.threshold_info,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelBundle":
        if doc.get("format_version") != BUNDLE_FORMAT_VERSION:
            raise BundleError(f"unsupported bundle format {doc.get('format_version')}")
        schema = FeatureSchema.from_json(doc["schema_json"])
        return cls(
            version=doc["version"],
            created_at=doc["created_at"],
            schema=schema,
            gnb=gnb_from_dict(doc["gnb"], schema),
            iforest=IsolationForestModel.from_dict(doc["iforest"]) if doc["iforest"] else None,
            rf=RandomForestModel.from_dict(doc["rf"]) if doc["rf"] else None,
            tier_bounds=tuple(doc["tier_bounds"]),
            threshold_info=doc["threshold_info"],
        )


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as handle:
        pickle.dump(bundle.to_dict(), handle, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)


def load_bundle(path: str | Path) -> ModelBundle:
    with open(path, "rb") as handle:
        return ModelBundle.from_dict(pickle.load(handle))


def publish_bundle(bundle: ModelBundle, bundle_dir: str | Path) -> Path:
    """Write the bundle under its version, then atomically repoint LATEST."""
    root = Path(bundle_dir)
    target = root / bundle.version / BUNDLE_FILENAME
    save_bundle(bundle, target)
    pointer = root / LATEST_POINTER
    tmp = root / (LATEST_POINTER + ".tmp")
    tmp.write_text(bundle.version + "\n", encoding="utf-8")
    tmp.replace(pointer)
    return target


def latest_version(bundle_dir: str | Path) -> str:
    pointer = Path(bundle_dir) / LATEST_POINTER
    if not pointer.exists():
        raise BundleError(f"no {LATEST_POINTER} pointer in {bundle_dir}")
    version = pointer.read_text(encoding="utf-8").strip()
    if not version:
        raise BundleError(f"{LATEST_POINTER} pointer in {bundle_dir} is empty")
    return version


def load_latest(bundle_dir: str | Path) -> ModelBundle:
    version = latest_version(bundle_dir)
    return load_bundle(Path(bundle_dir) / version / BUNDLE_FILENAME)


class TtlCache:
    """Serve one loaded bundle per TTL window, swapping atomically on expiry.

    The clock is injectable so expiry is testable to the exact request. A
    failed reload keeps the previous bundle serving and raises a health
    warning instead of an error; only a cache that has never loaded anything
    raises BundleUnavailable.
    """

    def __init__(
        self,
        bundle_dir: str | Path,
        ttl_seconds: float = DEFAULT_TTL_SECONDS,
        clock: Callable[[], float] = time.time,
    ):
        self.bundle_dir = Path(bundle_dir)
        self.ttl_seconds = float(ttl_seconds)
        self.clock = clock
        self._lock = threading.Lock()
        self._bundle: Optional[ModelBundle] = None
        self._loaded_at: Optional[float] = None
        self._warning: Optional[str] = None

    def get(self) -> ModelBundle:
        now = self.clock()
        with self._lock:
            fresh = (
                self._bundle is not None
                and self._loaded_at is not None
                and now - self._loaded_at < self.ttl_seconds
            )
            if fresh:
                return self._bundle
            try:
                bundle = load_latest(self.bundle_dir)
            except Exception as exc:  # noqa: BLE001 - keep serving through any load fault
                if self._bundle is None:
                    raise BundleUnavailable(str(exc)) from exc
                self._warning = f"reload failed, serving stale bundle: {exc}"
                return self._bundle
            self._bundle = bundle
            self._loaded_at = now
            self._warning = None
            return bundle

    def state(self) -> dict:
        with self._lock:
            loaded_at = self._loaded_at
            remaining = None
            if loaded_at is not None:
                remaining = max(0.0, self.ttl_seconds - (self.clock() - loaded_at))
            return {
                "model_version": self._bundle.version if self._bundle else None,
                "loaded_at": loaded_at,
                "ttl_seconds": self.ttl_seconds,
                "ttl_remaining": remaining,
                "warning": self._warning,
            }
