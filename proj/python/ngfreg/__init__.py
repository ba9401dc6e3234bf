"""Multimodal image registration with normalized gradient fields."""

from ngfreg._core import (
    NgfregError,
    distance,
    estimate_footprint,
    rasterize_lidar,
    register_images,
    rgb_composite,
    run_cli,
    synthesize,
    warp,
)

__all__ = [
    "NgfregError",
    "distance",
    "estimate_footprint",
    "rasterize_lidar",
    "register_images",
    "rgb_composite",
    "run_cli",
    "synthesize",
    "warp",
]
