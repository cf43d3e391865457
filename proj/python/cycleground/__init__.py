"""Python bindings for the cycleground captioner."""

import csv
import io

from ._core import (
    DimensionError,
    Error,
    GenerationError,
    IoError,
    NumericError,
    ParseError,
    UsageError,
    ValidationError,
    VersionError,
    bleu,
    evaluate,
    generate_dataset,
    gradcheck,
    iou,
    train,
    train_config_defaults,
    world_spec_defaults,
)


def parse_log(log_csv):
    """Rows of a training log as dicts; numeric columns become floats."""
    rows = []
    for row in csv.DictReader(io.StringIO(log_csv)):
        parsed = {}
        for key, value in row.items():
            if key == "phase":
                parsed[key] = value
            elif key == "epoch":
                parsed[key] = int(value)
            else:
                parsed[key] = float(value)
        rows.append(parsed)
    return rows


__all__ = [
    "DimensionError",
    "Error",
    "GenerationError",
    "IoError",
    "NumericError",
    "ParseError",
    "UsageError",
    "ValidationError",
    "VersionError",
    "bleu",
    "evaluate",
    "generate_dataset",
    "gradcheck",
    "iou",
    "parse_log",
    "train",
    "train_config_defaults",
    "world_spec_defaults",
]
