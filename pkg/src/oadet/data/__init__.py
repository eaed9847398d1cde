"""Synthetic sequences and the on-disk feature, label, prediction and checkpoint formats."""

from .io import (
    FeatureReader,
    FormatError,
    HeaderError,
    LabelRangeError,
    PayloadMismatchError,
    PredictionWriter,
    TruncatedError,
    read_checkpoint,
    read_features,
    read_labels,
    read_predictions,
    write_checkpoint,
    write_features,
    write_labels,
    write_predictions,
)
from .synth import SynthConfig, World, generate, generate_split, make_world, segment_lengths

__all__ = [
    "FeatureReader",
    "FormatError",
    "HeaderError",
    "LabelRangeError",
    "PayloadMismatchError",
    "PredictionWriter",
    "SynthConfig",
    "TruncatedError",
    "World",
    "generate",
    "generate_split",
    "make_world",
    "read_checkpoint",
    "read_features",
    "read_labels",
    "read_predictions",
    "segment_lengths",
    "write_checkpoint",
    "write_features",
    "write_labels",
    "write_predictions",
]
