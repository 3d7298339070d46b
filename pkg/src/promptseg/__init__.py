"""Prompt-derived instance segmentation pipelines and their evaluation stack.

The package turns per-image decoder predictions (foreground probability
plus center- and boundary-distance maps) into instance segmentations via
three pipelines (prompt generation, seeded watershed, grid prompting) and
scores them with IoU-threshold-averaged segmentation accuracy, rank
aggregation, and paired signed-rank tests.
"""

from . import errors
from .backends import (
    MaskCandidate,
    PredictorContext,
    external_predict,
    oracle_predict,
    region_grow_predict,
    resolve_backend,
)
from .exchange import (
    DatasetManifest,
    ManifestItem,
    PredictionBundle,
    ScoreRow,
    ScoreTable,
    read_bundle,
    read_label_map,
    read_manifest,
    read_scores,
    write_bundle,
    write_label_map,
    write_manifest,
    write_scores,
)
from .geometry import (
    UNBOUNDED_DISTANCE,
    connected_components,
    edt,
    mask_iou,
    pairwise_iou,
    rle_decode,
    rle_encode,
    seeded_watershed,
)
from .metrics import (
    DEFAULT_THRESHOLDS,
    IouTable,
    MatchResult,
    aggregate,
    average_rank,
    iou_table,
    match_at,
    msa,
)
from .phantom import PhantomSpec, analytic_maps, corrupt
from .pipelines import (
    AMGParams,
    NmsDecision,
    nms,
    rasterize,
    run_ais,
    run_amg,
    run_apg,
    run_apg_boundary,
    size_filter,
)
from .prompting import (
    MAP_CONVENTIONS,
    APGParams,
    MapConventions,
    PointPrompt,
    derive_prompts_boundary_maxima,
    derive_prompts_components,
    derive_seed_mask,
    grid_prompts,
)
from .stats import TestResult, wilcoxon_signed_rank, win_loss_draw

__version__ = "0.1.0"

__all__ = [
    "AMGParams",
    "APGParams",
    "DEFAULT_THRESHOLDS",
    "DatasetManifest",
    "IouTable",
    "MAP_CONVENTIONS",
    "ManifestItem",
    "MapConventions",
    "MaskCandidate",
    "MatchResult",
    "NmsDecision",
    "PhantomSpec",
    "PointPrompt",
    "PredictionBundle",
    "PredictorContext",
    "ScoreRow",
    "ScoreTable",
    "TestResult",
    "UNBOUNDED_DISTANCE",
    "aggregate",
    "analytic_maps",
    "average_rank",
    "connected_components",
    "corrupt",
    "derive_prompts_boundary_maxima",
    "derive_prompts_components",
    "derive_seed_mask",
    "edt",
    "errors",
    "external_predict",
    "grid_prompts",
    "iou_table",
    "mask_iou",
    "match_at",
    "msa",
    "nms",
    "oracle_predict",
    "pairwise_iou",
    "rasterize",
    "read_bundle",
    "read_label_map",
    "read_manifest",
    "read_scores",
    "region_grow_predict",
    "resolve_backend",
    "rle_decode",
    "rle_encode",
    "run_ais",
    "run_amg",
    "run_apg",
    "run_apg_boundary",
    "seeded_watershed",
    "size_filter",
    "win_loss_draw",
    "wilcoxon_signed_rank",
    "write_bundle",
    "write_label_map",
    "write_manifest",
    "write_scores",
]
