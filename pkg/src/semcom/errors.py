"""Exception types shared across the package."""


class SemcomError(Exception):
    """Base class for package errors."""


class ShapeError(SemcomError):
    """Tensor shape inconsistent with the configured model."""


class ParameterError(SemcomError):
    """Invalid layer parameter values (e.g. nonpositive GDN beta)."""


class ConfigError(SemcomError):
    """Invalid or inconsistent configuration."""


class DatasetError(SemcomError):
    """Empty or malformed dataset / manifest."""


class ImageFormatError(SemcomError):
    """Unsupported or undecodable image file."""


class FeatureLookupError(SemcomError):
    """Missing precomputed feature for a source id."""


class NormalizationError(SemcomError):
    """Power normalization hit a (near-)zero latent vector."""


class CheckpointError(SemcomError):
    """Unreadable, truncated, or incompatible checkpoint."""


class DivergenceError(SemcomError):
    """Training loss became non-finite."""
