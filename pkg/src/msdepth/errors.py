"""Exception types shared across the package."""


class MsDepthError(Exception):
    """Base class for all package-specific errors."""


class CalibrationError(MsDepthError):
    """Invalid or missing camera calibration (non-rigid transform, unknown pair)."""


class DomainError(MsDepthError):
    """Input violates a mathematical precondition (non-positive depth, empty mask)."""


class InterfaceError(MsDepthError):
    """Shape or contract mismatch between components."""


class ConfigError(MsDepthError):
    """Malformed or inconsistent configuration."""


class CheckpointCorruptionError(MsDepthError):
    """Checkpoint file is truncated, unreadable, or fails its digest check."""


class FrozenContractViolation(MsDepthError):
    """A parameter that must stay frozen was modified during training."""
