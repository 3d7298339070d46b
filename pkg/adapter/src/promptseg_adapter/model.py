"""Compact promptable segmentation model and its checkpoint contract.

The model follows the encoder/decoder split of promptable segmenters: an
image encoder produces a spatial embedding, a dense head decodes the three
prediction maps (foreground, center distance, boundary distance), and a
prompt decoder turns the embedding plus point prompts into mask logit
planes with per-plane scores. Only the prompt decoder is serialized for
inference; the dense head runs at export time to fill prediction bundles.

Checkpoints are torch archives with four keys: ``format`` (the literal
``promptable-seg-v1``), ``config`` (the architecture parameters),
``state_dict`` (the weights), and ``conventions`` (the polarity of the two
native distance channels, see CENTER_CONVENTIONS / BOUNDARY_CONVENTIONS).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointLoadError

CHECKPOINT_FORMAT = "promptable-seg-v1"

# Native polarity of the distance channels a checkpoint was trained with.
# zero_at_center / zero_at_boundary match the exchange-format convention.
CENTER_CONVENTIONS = ("zero_at_center", "one_at_center")
BOUNDARY_CONVENTIONS = ("zero_at_boundary", "one_at_boundary")
DEFAULT_CONVENTIONS = {
    "center_dist": "zero_at_center",
    "boundary_dist": "zero_at_boundary",
}

# Dense-head output channel order.
MAP_CHANNELS = ("fg", "center_dist", "boundary_dist")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture parameters stored inside every checkpoint."""

    in_channels: int = 3
    embed_dim: int = 32
    input_size: int = 64
    embed_size: int = 16
    num_mask_planes: int = 3

    def __post_init__(self) -> None:
        for name in ("in_channels", "embed_dim", "input_size", "embed_size",
                     "num_mask_planes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.input_size % self.embed_size:
            raise ValueError(
                f"input_size {self.input_size} must be a multiple of "
                f"embed_size {self.embed_size}"
            )
        factor = self.input_size // self.embed_size
        if factor & (factor - 1):
            raise ValueError(
                f"input_size / embed_size must be a power of two, got {factor}"
            )

    @property
    def scale(self) -> int:
        return self.input_size // self.embed_size


class ImageEncoder(nn.Module):
    """Strided convolution stack from image space to embedding space."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        steps = int(round(math.log2(config.scale)))
        mid = max(config.embed_dim // 2, 4)
        layers: list[nn.Module] = []
        channels = config.in_channels
        for i in range(steps):
            out = config.embed_dim if i == steps - 1 else mid
            layers.append(nn.Conv2d(channels, out, 3, stride=2, padding=1))
            layers.append(nn.GELU())
            channels = out
        self.net = nn.Sequential(*layers)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.net(image)


class MapDecoder(nn.Module):
    """Dense head: embedding to the three prediction maps, each in [0, 1]."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.embed_dim
        self.head = nn.Sequential(
            nn.Conv2d(c, c, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(c, len(MAP_CHANNELS), 1),
        )
        self.scale = config.scale

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        logits = self.head(embedding)
        logits = F.interpolate(
            logits, scale_factor=float(self.scale), mode="bilinear",
            align_corners=False,
        )
        return torch.sigmoid(logits)


class PromptDecoder(nn.Module):
    """Point prompts plus embedding to mask logit planes with scores.

    The forward signature is the serialized-graph contract: an unbatched
    ``C x He x We`` float32 embedding, ``K x 2`` normalized (row, col)
    coordinates in [0, 1], and ``K`` int32 labels (1 foreground, 0
    background). Returns ``M x h x w`` float32 logits and ``M`` float32
    scores in [0, 1].
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.embed_dim
        self.fuse = nn.Sequential(
            nn.Conv2d(c + 1, c, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(c, c, 3, padding=1),
            nn.GELU(),
        )
        self.mask_head = nn.Conv2d(c, config.num_mask_planes, 1)
        self.score_head = nn.Linear(c, config.num_mask_planes)
        self.scale = config.scale
        self.sigma = 0.1

    def forward(
        self, embedding: torch.Tensor, points: torch.Tensor, labels: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        he = embedding.shape[1]
        we = embedding.shape[2]
        ys = (torch.arange(he, dtype=torch.float32, device=embedding.device) + 0.5) / float(he)
        xs = (torch.arange(we, dtype=torch.float32, device=embedding.device) + 0.5) / float(we)
        grid_y = ys.view(he, 1).expand(he, we)
        grid_x = xs.view(1, we).expand(he, we)
        prompt = torch.zeros(1, he, we, dtype=torch.float32, device=embedding.device)
        for i in range(points.shape[0]):
            d2 = (grid_y - points[i, 0]) ** 2 + (grid_x - points[i, 1]) ** 2
            bump = torch.exp(-d2 / (2.0 * self.sigma * self.sigma))
            sign = labels[i].float() * 2.0 - 1.0
            prompt = prompt + sign * bump.unsqueeze(0)
        fused = self.fuse(torch.cat([embedding, prompt], dim=0).unsqueeze(0))
        logits = self.mask_head(fused)
        logits = F.interpolate(
            logits, scale_factor=float(self.scale), mode="bilinear",
            align_corners=False,
        )
        scores = torch.sigmoid(self.score_head(fused.mean(dim=[2, 3])))
        return logits.squeeze(0), scores.squeeze(0)


class TinyPromptableSegmenter(nn.Module):
    """Full model: encoder, dense map head, and prompt decoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = ImageEncoder(config)
        self.map_decoder = MapDecoder(config)
        self.prompt_decoder = PromptDecoder(config)

    def embed(self, image: torch.Tensor) -> torch.Tensor:
        """B x in_channels x H x W image in [0, 1] to B x C x H/s x W/s."""
        return self.encoder(image)

    def predict_maps(self, image: torch.Tensor) -> torch.Tensor:
        """B x in_channels x H x W image to B x 3 x H x W maps in [0, 1]."""
        return self.map_decoder(self.encoder(image))


def _validate_conventions(conventions: dict) -> dict[str, str]:
    if set(conventions) != {"center_dist", "boundary_dist"}:
        raise CheckpointLoadError(
            f"conventions must declare center_dist and boundary_dist, "
            f"got {sorted(conventions)}"
        )
    if conventions["center_dist"] not in CENTER_CONVENTIONS:
        raise CheckpointLoadError(
            f"unknown center_dist convention {conventions['center_dist']!r}"
        )
    if conventions["boundary_dist"] not in BOUNDARY_CONVENTIONS:
        raise CheckpointLoadError(
            f"unknown boundary_dist convention {conventions['boundary_dist']!r}"
        )
    return {k: str(v) for k, v in conventions.items()}


def make_checkpoint(
    path: str | Path,
    seed: int = 0,
    config: ModelConfig | None = None,
    conventions: dict[str, str] | None = None,
) -> Path:
    """Write a seeded, randomly initialized checkpoint (demo and test fixture)."""
    config = config or ModelConfig()
    conventions = _validate_conventions(dict(conventions or DEFAULT_CONVENTIONS))
    torch.manual_seed(seed)
    model = TinyPromptableSegmenter(config)
    save_checkpoint(model, conventions, path)
    return Path(path)


def save_checkpoint(
    model: TinyPromptableSegmenter, conventions: dict[str, str], path: str | Path
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": dataclasses.asdict(model.config),
        "state_dict": model.state_dict(),
        "conventions": _validate_conventions(dict(conventions)),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[TinyPromptableSegmenter, dict[str, str]]:
    """Load a checkpoint, returning the eval-mode model and its conventions."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointLoadError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointLoadError(
            f"{path} is not a {CHECKPOINT_FORMAT!r} checkpoint"
        )
    try:
        config = ModelConfig(**payload["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointLoadError(f"{path}: bad config: {exc}") from exc
    conventions = _validate_conventions(dict(payload.get("conventions", {})))
    model = TinyPromptableSegmenter(config)
    try:
        model.load_state_dict(payload["state_dict"])
    except (KeyError, RuntimeError) as exc:
        raise CheckpointLoadError(f"{path}: bad state dict: {exc}") from exc
    model.eval()
    return model, conventions
