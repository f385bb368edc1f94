"""Background-guided internal learning: per-image optimization of a
convolutional generator that fills a masked hole, optionally constrained by
the average of nearby background pixels."""

from .losses import (
    GuideSpec,
    compute_background_average,
    default_guide_region,
    dip_loss,
    guide_term,
    guided_loss,
)
from .network import NetworkConfig, build_network
from .runner import InpaintResult, InpaintSpec, gradcheck, inpaint, write_trace_csv

__all__ = [
    "GuideSpec",
    "compute_background_average",
    "default_guide_region",
    "dip_loss",
    "guide_term",
    "guided_loss",
    "NetworkConfig",
    "build_network",
    "InpaintResult",
    "InpaintSpec",
    "gradcheck",
    "inpaint",
    "write_trace_csv",
]
