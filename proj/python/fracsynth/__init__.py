"""Synthetic rock-joint trace images: Python access to the native core."""

from ._core import (
    GenerationError,
    ValidationError,
    binarize,
    classify_block,
    confusion,
    metrics,
    read_png,
    run_cli,
    sample_blocks,
    thickness,
    topology,
    version,
    write_png,
)

__version__ = version()

__all__ = [
    "GenerationError",
    "ValidationError",
    "binarize",
    "classify_block",
    "confusion",
    "metrics",
    "read_png",
    "run_cli",
    "sample_blocks",
    "thickness",
    "topology",
    "version",
    "write_png",
]
