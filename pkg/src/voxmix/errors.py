"""Exception hierarchy shared across the toolkit."""


class VoxmixError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(VoxmixError):
    """Invalid configuration or command-line arguments (CLI exit code 1)."""


class DataError(VoxmixError):
    """Invalid, inconsistent, or corrupted input data (CLI exit code 2)."""


class NoTumorError(DataError):
    """Segmentation contains no foreground voxels, so no ROI can be derived."""
