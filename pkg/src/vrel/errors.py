"""Exception types shared across the engine."""


class VrelError(Exception):
    """Base class for all engine errors."""


class ShapeError(VrelError):
    """Tensor shapes are incompatible with the requested operation."""


class AxisError(VrelError):
    """An axis is out of range or repeated."""


class ConfigError(VrelError):
    """An architecture config failed to parse or chain-check."""


class BindError(VrelError):
    """Weight binding failed: missing tensor or shape mismatch."""


class ContainerFormatError(VrelError):
    """A weight container file is malformed."""


class VideoFormatError(VrelError):
    """A clip input (PNG directory or raw tensor file) is malformed."""
