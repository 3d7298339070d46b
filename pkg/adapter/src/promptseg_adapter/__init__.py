"""Export toolchain: checkpoints to prediction bundles and decoder graphs."""

from .errors import AdapterError, CheckpointLoadError, ExportError, ExportMismatchError
from .export import ExportJob, export_bundles, export_decoder_graph, verify_decoder_graph
from .model import (
    CHECKPOINT_FORMAT,
    ModelConfig,
    TinyPromptableSegmenter,
    load_checkpoint,
    make_checkpoint,
    save_checkpoint,
)

__all__ = [
    "AdapterError",
    "CheckpointLoadError",
    "ExportError",
    "ExportMismatchError",
    "ExportJob",
    "export_bundles",
    "export_decoder_graph",
    "verify_decoder_graph",
    "CHECKPOINT_FORMAT",
    "ModelConfig",
    "TinyPromptableSegmenter",
    "load_checkpoint",
    "make_checkpoint",
    "save_checkpoint",
]
