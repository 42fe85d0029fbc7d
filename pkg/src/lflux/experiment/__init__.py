"""Configuration, persistence, sweeps and the command-line driver."""

from .config import AnalysisConfig, ConfigError, ExperimentConfig, SweepConfig
from .io import (
    BadMagicError,
    CorruptHeaderError,
    DivergenceWarning,
    SnapshotFormatError,
    TruncatedFileError,
    VersionMismatchError,
    load_snapshot,
    save_snapshot,
)

__all__ = [
    "AnalysisConfig",
    "BadMagicError",
    "ConfigError",
    "CorruptHeaderError",
    "DivergenceWarning",
    "ExperimentConfig",
    "SnapshotFormatError",
    "SweepConfig",
    "TruncatedFileError",
    "VersionMismatchError",
    "load_snapshot",
    "save_snapshot",
]
