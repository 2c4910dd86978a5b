"""Covert prompt transmission: detection, compression/encryption and policy training."""

from ._core import ConfigError, DomainError, FormatError, ShapeError, channel, detection, pcae, train

__all__ = ["ConfigError", "DomainError", "FormatError", "ShapeError", "channel", "detection", "pcae", "train"]
