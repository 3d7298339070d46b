"""Turn a checkpoint plus an image folder into exchange-format artifacts.

``export_bundles`` runs the dense head over every image (tiled with a halo
when the image is larger than one tile), converts the distance channels to
the exchange polarity (0 at the instance center, 0 at the boundary), and
writes one ``*.bundle.npz`` per image plus a dataset manifest. The applied
conversion, the checkpoint's declared conventions, and an empirical
consistency probe are recorded under the manifest's ``export`` key.

``export_decoder_graph`` serializes the prompt decoder with the fixed
inference signature (embedding, points, labels -> mask_logits, scores) and
self-tests the saved graph against the native module before returning.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ExportError, ExportMismatchError
from .model import TinyPromptableSegmenter, load_checkpoint

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")

# Self-test bound for the serialized prompt decoder.
GRAPH_TOLERANCE = 1e-3


@dataclass(frozen=True)
class ExportJob:
    """One export run: checkpoint, image folder, output folder, tiling."""

    checkpoint: Path
    images: Path
    out: Path
    tile_size: int | None = None
    halo: int = 8
    device: str = "cpu"
    name: str = "export"
    modality: str = "unknown"

    def __post_init__(self) -> None:
        if self.halo < 0:
            raise ValueError(f"halo must be nonnegative, got {self.halo}")
        if self.tile_size is not None and self.tile_size <= 2 * self.halo:
            raise ValueError(
                f"tile_size {self.tile_size} must exceed twice the halo {self.halo}"
            )


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _predict_maps_tiled(
    model: TinyPromptableSegmenter, image: np.ndarray, tile: int, halo: int,
    device: torch.device,
) -> np.ndarray:
    """Dense maps at image resolution, stitched from center crops of tiles."""
    height, width, _ = image.shape
    stride = tile - 2 * halo
    rows = max(1, -(-height // stride))
    cols = max(1, -(-width // stride))
    pad_bottom = (rows - 1) * stride + tile - halo - height
    pad_right = (cols - 1) * stride + tile - halo - width
    padded = np.pad(
        image.astype(np.float32) / 255.0,
        ((halo, pad_bottom), (halo, pad_right), (0, 0)),
        mode="edge",
    )
    out = np.zeros((3, height, width), dtype=np.float32)
    tensor = torch.from_numpy(np.ascontiguousarray(padded.transpose(2, 0, 1)))
    tensor = tensor.unsqueeze(0).to(device)
    with torch.no_grad():
        for r in range(rows):
            y0 = r * stride
            take_h = min(stride, height - y0)
            for c in range(cols):
                x0 = c * stride
                take_w = min(stride, width - x0)
                crop = tensor[:, :, y0 : y0 + tile, x0 : x0 + tile]
                maps = model.predict_maps(crop)[0].cpu().numpy()
                out[:, y0 : y0 + take_h, x0 : x0 + take_w] = maps[
                    :, halo : halo + take_h, halo : halo + take_w
                ]
    return out


def _embed_whole_image(
    model: TinyPromptableSegmenter, image: np.ndarray, device: torch.device
) -> np.ndarray:
    """One embedding per image: the whole frame resized to the model input."""
    size = model.config.input_size
    tensor = torch.from_numpy(
        np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32) / 255.0
    ).unsqueeze(0)
    tensor = torch.nn.functional.interpolate(
        tensor, size=(size, size), mode="bilinear", align_corners=False
    ).to(device)
    with torch.no_grad():
        embedding = model.embed(tensor)[0].cpu().numpy()
    return np.ascontiguousarray(embedding, dtype=np.float32)


def _probe_correlation(fg, center, boundary) -> float | None:
    """Pearson correlation of the converted distance channels on foreground.

    Consistently converted maps anti-correlate inside objects (center
    distance grows where boundary distance shrinks); the value is recorded
    so the polarity declared by the checkpoint can be audited per export.
    """
    mask = fg >= 0.5
    if int(mask.sum()) < 2:
        return None
    a = center[mask].astype(np.float64)
    b = boundary[mask].astype(np.float64)
    if a.std() == 0.0 or b.std() == 0.0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def _write_bundle_npz(path: Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def export_bundles(job: ExportJob) -> Path:
    """Export every image in the folder; returns the manifest path.

    Per-image failures are logged and recorded in the manifest rather than
    aborting the run. Raises ExportError when the folder has no images or
    the tiling geometry does not fit the model.
    """
    model, conventions = load_checkpoint(job.checkpoint)
    device = torch.device(job.device)
    model.to(device)

    tile = job.tile_size if job.tile_size is not None else model.config.input_size
    if tile <= 2 * job.halo:
        raise ExportError(f"tile size {tile} must exceed twice the halo {job.halo}")
    if tile % model.config.scale:
        raise ExportError(
            f"tile size {tile} must be a multiple of the encoder stride "
            f"{model.config.scale}"
        )

    paths = sorted(
        p for p in Path(job.images).iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise ExportError(f"no images with suffixes {IMAGE_SUFFIXES} in {job.images}")

    conversions = {
        "center_dist": "inverted" if conventions["center_dist"] == "one_at_center" else "kept",
        "boundary_dist": "inverted" if conventions["boundary_dist"] == "one_at_boundary" else "kept",
    }

    out = Path(job.out)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    failures: dict[str, str] = {}
    probes = []
    for path in paths:
        item_id = path.stem
        try:
            image = _load_image(path)
            maps = _predict_maps_tiled(model, image, tile, job.halo, device)
            fg, center, boundary = maps[0], maps[1], maps[2]
            if conversions["center_dist"] == "inverted":
                center = 1.0 - center
            if conversions["boundary_dist"] == "inverted":
                boundary = 1.0 - boundary
            probe = _probe_correlation(fg, center, boundary)
            if probe is not None:
                probes.append(probe)
            embedding = _embed_whole_image(model, image, device)
            bundle_path = out / f"{item_id}.bundle.npz"
            _write_bundle_npz(bundle_path, {
                "fg": np.ascontiguousarray(fg, dtype=np.float32),
                "center_dist": np.ascontiguousarray(center, dtype=np.float32),
                "boundary_dist": np.ascontiguousarray(boundary, dtype=np.float32),
                "embedding": embedding,
                "image": image,
            })
        except Exception as exc:
            logger.warning("image %s failed: %s", path.name, exc)
            failures[item_id] = str(exc)
            continue
        items.append({"id": item_id, "bundle_path": bundle_path.name, "gt_path": None})

    manifest = {
        "name": job.name,
        "modality": job.modality,
        "items": items,
        "export": {
            "checkpoint": str(job.checkpoint),
            "declared_conventions": conventions,
            "conversions": conversions,
            "probe_center_boundary_correlation": (
                float(np.mean(probes)) if probes else None
            ),
            "tile_size": tile,
            "halo": job.halo,
            "failures": failures,
        },
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _self_test_inputs(model: TinyPromptableSegmenter):
    config = model.config
    generator = torch.Generator().manual_seed(1234)
    embedding = torch.randn(
        config.embed_dim, config.embed_size, config.embed_size, generator=generator
    )
    points = torch.tensor([[0.5, 0.5]], dtype=torch.float32)
    labels = torch.tensor([1], dtype=torch.int32)
    return embedding, points, labels


def verify_decoder_graph(model: TinyPromptableSegmenter, graph_path: str | Path) -> float:
    """Compare the saved graph against the native prompt decoder.

    Returns the maximum absolute logit difference; raises ExportMismatchError
    when it exceeds the tolerance (or the scores drift).
    """
    embedding, points, labels = _self_test_inputs(model)
    graph = torch.jit.load(str(graph_path), map_location="cpu")
    with torch.no_grad():
        want_logits, want_scores = model.prompt_decoder(embedding, points, labels)
        got_logits, got_scores = graph(embedding, points, labels)
    logit_diff = float((want_logits - got_logits).abs().max())
    score_diff = float((want_scores - got_scores).abs().max())
    if logit_diff > GRAPH_TOLERANCE or score_diff > GRAPH_TOLERANCE:
        raise ExportMismatchError(
            f"graph self-test failed: max logit diff {logit_diff:.3g}, "
            f"max score diff {score_diff:.3g}, tolerance {GRAPH_TOLERANCE:g}"
        )
    return logit_diff


def export_decoder_graph(checkpoint: str | Path, out: str | Path) -> Path:
    """Serialize the prompt decoder and self-test the saved file."""
    model, _ = load_checkpoint(checkpoint)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    scripted = torch.jit.script(model.prompt_decoder)
    scripted.save(str(out))
    try:
        verify_decoder_graph(model, out)
    except ExportMismatchError:
        out.unlink(missing_ok=True)
        raise
    return out
