"""Shared exception types for the segmentation pipeline."""


class ConfigurationError(ValueError):
    """A config value is outside its allowed range or inconsistent with the rest."""


class ValidationError(ValueError):
    """Data violates an invariant (non-binary mask, out-of-range pixel, ...)."""


class ImageFormatError(ValueError):
    """A file exists but cannot be decoded as a raster image."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss; message names the epoch and batch."""
