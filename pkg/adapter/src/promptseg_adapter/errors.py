"""Exception hierarchy for the export toolchain."""


class AdapterError(Exception):
    """Base class for all adapter failures."""


class CheckpointLoadError(AdapterError):
    """The checkpoint file is missing, unreadable, or not in the expected format."""


class ExportMismatchError(AdapterError):
    """The exported inference graph disagrees with the native model."""


class ExportError(AdapterError):
    """An export job cannot run (bad folder, bad tiling geometry)."""
