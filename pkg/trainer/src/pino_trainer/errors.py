"""Exception hierarchy for the trainer."""

from __future__ import annotations


class TrainerError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(TrainerError):
    """A training configuration value is out of range or inconsistent."""


class DivergenceError(TrainerError):
    """The loss became non-finite; carries the seed for reproduction."""

    def __init__(self, message: str, seed: int, epoch: int) -> None:
        super().__init__(f"{message} (seed {seed}, epoch {epoch})")
        self.seed = seed
        self.epoch = epoch


class ExportError(TrainerError):
    """Weight or fixture serialization failed its self check."""
