# Copyright 2026 The DMKD Workbench Authors
# SPDX-License-Identifier: Apache-2.0
"""Dual masked knowledge distillation workbench.

Arrays are float64 numpy arrays. Feature maps are [C, H, W] or [N, C, H, W].
"""

from ._core import (
    CheckpointInvalid,
    ConfigError,
    DistillConfig,
    DistillHead,
    Error,
    NonBinaryInput,
    NonPositiveTemperature,
    ShapeMismatch,
    ThresholdOutOfRange,
    apply_mask,
    channel_attention,
    conv2d,
    dmkd_forward,
    generate_dataset,
    gradcheck,
    make_masks,
    mask_ratio,
    spatial_attention,
    threshold_mask,
    variants,
)

__all__ = [
    "CheckpointInvalid",
    "ConfigError",
    "DistillConfig",
    "DistillHead",
    "Error",
    "NonBinaryInput",
    "NonPositiveTemperature",
    "ShapeMismatch",
    "ThresholdOutOfRange",
    "apply_mask",
    "channel_attention",
    "conv2d",
    "dmkd_forward",
    "generate_dataset",
    "gradcheck",
    "make_masks",
    "mask_ratio",
    "spatial_attention",
    "threshold_mask",
    "variants",
]
