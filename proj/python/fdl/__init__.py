"""CNN ensembles trained under a feature distance loss.

The heavy lifting lives in the C++ extension; this package re-exports its
surface: feature representations (aggregate/mask/represent), the pairwise
distance loss, Grad-CAM heatmaps and their overlap score, the synthetic
two-patch dataset, checkpointed model inference, and the full CLI pipeline.
"""

from fdl._core import (
    ConfigError,
    DimensionError,
    FormatError,
    Model,
    ValidationError,
    aggregate,
    mask,
    overlap,
    pair_loss,
    pairwise_report,
    represent,
    run_cli,
    two_patch,
    verify,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "FormatError",
    "Model",
    "ValidationError",
    "aggregate",
    "mask",
    "overlap",
    "pair_loss",
    "pairwise_report",
    "represent",
    "run_cli",
    "two_patch",
    "verify",
]
