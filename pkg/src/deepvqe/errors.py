"""Exception taxonomy shared across the package."""


class DeepVqeError(Exception):
    """Base class for all package errors."""


class ShapeError(DeepVqeError, ValueError):
    """Tensor shape or size does not match the operation's contract."""


class ConfigError(DeepVqeError, ValueError):
    """Invalid or inconsistent configuration value."""


class FrameContractError(DeepVqeError, ValueError):
    """Streaming call violated the fixed per-frame contract."""


class WeightFormatError(DeepVqeError, ValueError):
    """Weight container is malformed, truncated, or mismatched."""
