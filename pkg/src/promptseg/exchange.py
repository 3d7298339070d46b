"""On-disk exchange formats: prediction bundles, label maps, manifests, score tables.

A prediction bundle is a zip container of v1.0 simple-array files (one per
key, written with numpy). Required keys are ``fg``, ``center_dist`` and
``boundary_dist`` (H x W float32, values in [0, 1]); ``embedding``
(C x He x We float32) and ``image`` (H x W x 3 uint8) are optional. Arrays
are little-endian, C order.

Label maps are either int32 ``.npy`` arrays or single-channel 16-bit
grayscale PNGs; 0 is background and positive values are instance ids.

Manifests are JSON objects ``{"name", "modality", "items": [...]}``; item
paths are resolved relative to the manifest file. Score tables travel as
CSV (header ``dataset,image_id,method,msa``, 6-decimal fixed msa) or as a
JSON array of objects (full float precision).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    LabelOverflowError,
    ManifestError,
    MissingKeyError,
    NegativeLabelError,
    ShapeMismatchError,
    UnsupportedDtypeError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

MAP_KEYS = ("fg", "center_dist", "boundary_dist")
OPTIONAL_KEYS = ("embedding", "image")


@dataclass
class PredictionBundle:
    """Per-image decoder outputs consumed by every pipeline.

    ``fg`` is a foreground probability map, ``center_dist`` and
    ``boundary_dist`` are normalized distance maps (see
    :data:`promptseg.prompting.MAP_CONVENTIONS` for their polarity).
    ``clamped_values`` counts pixels that were clipped into [0, 1] when the
    bundle was read from disk.
    """

    fg: np.ndarray
    center_dist: np.ndarray
    boundary_dist: np.ndarray
    embedding: np.ndarray | None = None
    image: np.ndarray | None = None
    clamped_values: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.fg.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class ManifestItem:
    id: str
    bundle_path: Path
    gt_path: Path | None = None


@dataclass
class DatasetManifest:
    name: str
    modality: str
    items: list[ManifestItem] = field(default_factory=list)


@dataclass(frozen=True)
class ScoreRow:
    dataset: str
    image_id: str
    method: str
    msa: float


@dataclass
class ScoreTable:
    """Rows of per-image, per-method mean segmentation accuracy."""

    rows: list[ScoreRow] = field(default_factory=list)

    def validate(self) -> "ScoreTable":
        seen = set()
        for row in self.rows:
            key = (row.dataset, row.image_id, row.method)
            if key in seen:
                raise ManifestError(f"duplicate score row for {key}")
            seen.add(key)
            if not 0.0 <= row.msa <= 1.0:
                raise ManifestError(f"msa out of [0, 1] for {key}: {row.msa}")
        return self

    def extend(self, other: "ScoreTable") -> None:
        self.rows.extend(other.rows)

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

    def datasets(self) -> list[str]:
        return sorted({r.dataset for r in self.rows})


def _require_map(arrays: dict[str, np.ndarray], key: str) -> np.ndarray:
    if key not in arrays:
        raise MissingKeyError(key)
    arr = arrays[key]
    if arr.dtype != np.float32:
        raise UnsupportedDtypeError(f"{key} must be float32, got {arr.dtype}")
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{key} must be 2-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def read_bundle(path: str | Path) -> PredictionBundle:
    """Read a prediction bundle, validating shapes and dtypes.

    Map values outside [0, 1] are clamped; the number of clamped pixels is
    recorded on the bundle and logged as a warning.
    """
    path = Path(path)
    if not zipfile.is_zipfile(path):
        raise UnsupportedFormatError(f"{path} is not a zip container")
    try:
        with np.load(path) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except zipfile.BadZipFile as exc:
        raise UnsupportedFormatError(f"{path} is not a zip container: {exc}") from exc

    maps = [_require_map(arrays, k) for k in MAP_KEYS]
    shape = maps[0].shape
    for key, arr in zip(MAP_KEYS, maps):
        if arr.shape != shape:
            raise ShapeMismatchError(
                f"{key} has shape {arr.shape}, expected {shape}"
            )

    clamped = 0
    clipped = []
    for arr in maps:
        out_of_range = int(np.count_nonzero((arr < 0.0) | (arr > 1.0)))
        clamped += out_of_range
        clipped.append(np.clip(arr, 0.0, 1.0) if out_of_range else arr)
    if clamped:
        logger.warning("%s: clamped %d map values into [0, 1]", path, clamped)

    embedding = arrays.get("embedding")
    if embedding is not None:
        if embedding.dtype != np.float32:
            raise UnsupportedDtypeError(
                f"embedding must be float32, got {embedding.dtype}"
            )
        if embedding.ndim != 3:
            raise ShapeMismatchError(
                f"embedding must be C x He x We, got shape {embedding.shape}"
            )
        embedding = np.ascontiguousarray(embedding)

    image = arrays.get("image")
    if image is not None:
        if image.dtype != np.uint8:
            raise UnsupportedDtypeError(f"image must be uint8, got {image.dtype}")
        if image.ndim != 3 or image.shape[2] != 3 or image.shape[:2] != shape:
            raise ShapeMismatchError(
                f"image must be H x W x 3 matching the maps, got {image.shape}"
            )
        image = np.ascontiguousarray(image)

    return PredictionBundle(
        fg=clipped[0],
        center_dist=clipped[1],
        boundary_dist=clipped[2],
        embedding=embedding,
        image=image,
        clamped_values=clamped,
    )


def write_bundle(bundle: PredictionBundle, path: str | Path) -> None:
    """Write a bundle as a zip of simple-array files (keys as in MAP_KEYS)."""
    arrays = {
        "fg": np.ascontiguousarray(bundle.fg, dtype=np.float32),
        "center_dist": np.ascontiguousarray(bundle.center_dist, dtype=np.float32),
        "boundary_dist": np.ascontiguousarray(bundle.boundary_dist, dtype=np.float32),
    }
    if bundle.embedding is not None:
        arrays["embedding"] = np.ascontiguousarray(bundle.embedding, dtype=np.float32)
    if bundle.image is not None:
        arrays["image"] = np.ascontiguousarray(bundle.image, dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_label_map(path: str | Path) -> np.ndarray:
    """Read an instance label map from ``.npy`` (int32) or 16-bit PNG."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".npy":
        arr = np.load(path)
        if arr.dtype != np.int32:
            raise UnsupportedFormatError(
                f"{path}: label arrays must be int32, got {arr.dtype}"
            )
    elif suffix == ".png":
        with Image.open(path) as img:
            if img.mode not in ("I;16", "I"):
                raise UnsupportedFormatError(
                    f"{path}: expected 16-bit grayscale PNG, got mode {img.mode}"
                )
            arr = np.asarray(img, dtype=np.int64)
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
            raise UnsupportedFormatError(f"{path}: values outside 16-bit range")
        arr = arr.astype(np.int32)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported label-map extension")
    if arr.ndim != 2:
        raise UnsupportedFormatError(f"{path}: label map must be 2-D, got {arr.shape}")
    if arr.size and arr.min() < 0:
        raise NegativeLabelError(f"{path}: labels must be nonnegative")
    return np.ascontiguousarray(arr)


def write_label_map(labels: np.ndarray, path: str | Path, format: str = "array") -> None:
    """Write a label map as an int32 array (``array``) or 16-bit PNG (``png16``)."""
    labels = np.asarray(labels)
    if labels.size and labels.min() < 0:
        raise NegativeLabelError("labels must be nonnegative")
    if format == "array":
        with open(path, "wb") as fh:
            np.save(fh, np.ascontiguousarray(labels, dtype=np.int32))
    elif format == "png16":
        if labels.size and labels.max() > 65535:
            raise LabelOverflowError(
                f"label {int(labels.max())} exceeds the png16 range"
            )
        Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")
    else:
        raise UnsupportedFormatError(f"unknown label-map format {format!r}")


def read_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Item paths are resolved relative to the manifest's directory. Duplicate
    ids and missing referenced files are rejected.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("name", "modality", "items"):
        if key not in raw:
            raise ManifestError(f"{path}: manifest missing key {key!r}")

    base = path.parent
    items: list[ManifestItem] = []
    seen: set[str] = set()
    missing: list[str] = []
    for entry in raw["items"]:
        item_id = entry["id"]
        if item_id in seen:
            raise ManifestError(f"{path}: duplicate item id {item_id!r}")
        seen.add(item_id)
        bundle_path = base / entry["bundle_path"]
        gt = entry.get("gt_path")
        gt_path = base / gt if gt else None
        if not bundle_path.exists():
            missing.append(str(bundle_path))
        if gt_path is not None and not gt_path.exists():
            missing.append(str(gt_path))
        items.append(ManifestItem(id=item_id, bundle_path=bundle_path, gt_path=gt_path))
    if missing:
        raise ManifestError(f"{path}: referenced files missing: {', '.join(missing)}")
    return DatasetManifest(name=raw["name"], modality=raw["modality"], items=items)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a manifest, storing item paths relative to the manifest file."""
    path = Path(path)
    base = path.parent

    def rel(p: Path) -> str:
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    payload = {
        "name": manifest.name,
        "modality": manifest.modality,
        "items": [
            {
                "id": item.id,
                "bundle_path": rel(item.bundle_path),
                "gt_path": rel(item.gt_path) if item.gt_path else None,
            }
            for item in manifest.items
        ],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def write_scores(table: ScoreTable, path: str | Path, format: str = "csv") -> None:
    """Write a score table as CSV (6-decimal msa) or JSON (full precision)."""
    path = Path(path)
    table.validate()
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset", "image_id", "method", "msa"])
            for row in table.rows:
                writer.writerow(
                    [row.dataset, row.image_id, row.method, f"{row.msa:.6f}"]
                )
    elif format == "json":
        payload = [
            {
                "dataset": r.dataset,
                "image_id": r.image_id,
                "method": r.method,
                "msa": r.msa,
            }
            for r in table.rows
        ]
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        raise UnsupportedFormatError(f"unknown score format {format!r}")


def read_scores(path: str | Path) -> ScoreTable:
    """Read a score table from ``.csv`` or ``.json``."""
    path = Path(path)
    suffix = path.suffix.lower()
    rows: list[ScoreRow] = []
    if suffix == ".csv":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append(
                    ScoreRow(
                        dataset=rec["dataset"],
                        image_id=rec["image_id"],
                        method=rec["method"],
                        msa=float(rec["msa"]),
                    )
                )
    elif suffix == ".json":
        for rec in json.loads(path.read_text()):
            rows.append(
                ScoreRow(
                    dataset=rec["dataset"],
                    image_id=rec["image_id"],
                    method=rec["method"],
                    msa=float(rec["msa"]),
                )
            )
    else:
        raise UnsupportedFormatError(f"{path}: unsupported score-table extension")
    return ScoreTable(rows).validate()
