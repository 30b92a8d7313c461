"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid case, goal, beam, or run configuration."""


class DimensionError(ValueError):
    """Shape mismatch between vectors, matrices, or grids."""
