from .align import (
    align_and_sum,
    downscale_motion,
    estimate_depth_motion,
    motion_proportions,
    warp_histogram,
    warp_image,
)
from .flow import FlowParams, estimate_flow_tvl1, tvl1

__all__ = [
    "FlowParams",
    "align_and_sum",
    "downscale_motion",
    "estimate_depth_motion",
    "estimate_flow_tvl1",
    "motion_proportions",
    "tvl1",
    "warp_histogram",
    "warp_image",
]
