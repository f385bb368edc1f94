"""Reference implementations of the inpainting objectives.

``dip_loss`` is the sum of squared differences over known pixels. The guide
term pulls the hole's average toward the average of known background pixels
in a region around the hole, either one value per channel (global) or per
hole-intersecting row (row_wise). The optimization loop normalizes the data
term by the element count (standard MSELoss semantics) so the guide weight
has a resolution-independent meaning; these reference functions keep the
plain sum.

These are plain numpy functions; the optimization loop mirrors them in torch
and the test suite pins the two to each other and to finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoBackgroundError
from ..segmask import Bbox, Mask, bbox_to_pixels, clip_bbox

GUIDE_MODES = ("none", "global", "row_wise")


@dataclass(frozen=True)
class GuideSpec:
    """Background statistics for the guide term.

    ``row_means`` has one per-channel mean for every hole-intersecting row
    (same order as ``rows``); rows without known background pixels inside the
    region fall back to the global mean and are flagged in ``row_fallback``.
    """

    region: Bbox
    mode: str
    global_mean: np.ndarray                  # (C,)
    rows: np.ndarray | None = None           # (R,) int row indices
    row_means: np.ndarray | None = None      # (R, C)
    row_fallback: np.ndarray | None = None   # (R,) bool

    @property
    def fallback_rows(self) -> list[int]:
        if self.rows is None or self.row_fallback is None:
            return []
        return [int(r) for r in self.rows[self.row_fallback]]


def _as_chw(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    return image


def default_guide_region(mask: Mask, expand: float = 0.25) -> Bbox:
    """Hole bbox expanded by ``expand`` of its width/height per side, clipped."""
    rect = mask.hole_bbox_pixels()
    if rect is None:
        raise NoBackgroundError("mask has no hole; no guide region to derive")
    x0, y0, x1, y1 = rect
    w_frac = (x1 - x0) / mask.width
    h_frac = (y1 - y0) / mask.height
    return clip_bbox((
        x0 / mask.width - expand * w_frac,
        y0 / mask.height - expand * h_frac,
        x1 / mask.width + expand * w_frac,
        y1 / mask.height + expand * h_frac,
    ))


def compute_background_average(image: np.ndarray, mask: Mask, guide: Bbox,
                               mode: str = "global") -> GuideSpec:
    """Average known pixels inside the guide region, per channel.

    In row_wise mode every hole-intersecting image row gets its own average,
    taken over that row's known pixels inside the region; rows with no known
    pixels there fall back to the global average (flagged).
    """
    if mode not in ("global", "row_wise"):
        raise ValueError(f"mode must be 'global' or 'row_wise', got {mode!r}")
    img = _as_chw(image)
    h, w, _ = img.shape
    if (h, w) != (mask.height, mask.width):
        raise ValueError(f"image {w}x{h} vs mask {mask.width}x{mask.height}")
    x0, y0, x1, y1 = bbox_to_pixels(clip_bbox(guide), w, h)
    region = np.zeros((h, w), dtype=bool)
    region[y0:y1, x0:x1] = True
    known = mask.data == 1
    usable = region & known
    if not usable.any():
        raise NoBackgroundError(
            f"guide region {guide} contains no known pixels")
    global_mean = img[usable].mean(axis=0)

    if mode == "global":
        return GuideSpec(region=clip_bbox(guide), mode="global",
                         global_mean=global_mean)

    hole_rows = np.unique(np.nonzero(mask.data == 0)[0])
    row_means = np.empty((len(hole_rows), img.shape[2]), dtype=np.float64)
    fallback = np.zeros(len(hole_rows), dtype=bool)
    for i, r in enumerate(hole_rows):
        row_usable = usable[r]
        if row_usable.any():
            row_means[i] = img[r][row_usable].mean(axis=0)
        else:
            row_means[i] = global_mean
            fallback[i] = True
    return GuideSpec(region=clip_bbox(guide), mode="row_wise",
                     global_mean=global_mean, rows=hole_rows,
                     row_means=row_means, row_fallback=fallback)


def dip_loss(x: np.ndarray, x0: np.ndarray, mask: Mask) -> float:
    """Sum of squared differences over known pixels; holes contribute zero."""
    x = _as_chw(x)
    x0 = _as_chw(x0)
    if x.shape != x0.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x0.shape}")
    if x.shape[:2] != (mask.height, mask.width):
        raise ValueError(f"image {x.shape[:2]} vs mask "
                         f"{(mask.height, mask.width)}")
    m = mask.data[:, :, None].astype(np.float64)
    return float(np.sum(((x - x0) * m) ** 2))


def guide_term(x: np.ndarray, mask: Mask, guide: GuideSpec) -> float:
    """Squared distance of the hole's average(s) to the background average,
    already divided by the channel count. Zero when the mask has no hole."""
    x = _as_chw(x)
    channels = x.shape[2]
    hole = mask.data == 0
    if not hole.any():
        return 0.0
    if guide.mode == "global":
        hole_mean = x[hole].mean(axis=0)
        diff = hole_mean - guide.global_mean
        return float(np.sum(diff ** 2) / channels)
    if guide.mode != "row_wise":
        raise ValueError(f"unknown guide mode {guide.mode!r}")
    if guide.rows is None or guide.row_means is None:
        raise ValueError("row_wise guide is missing per-row averages")
    per_row = np.empty(len(guide.rows), dtype=np.float64)
    for i, r in enumerate(guide.rows):
        row_hole = hole[r]
        if not row_hole.any():
            raise ValueError(f"guide row {r} has no hole pixels in the mask")
        row_mean = x[r][row_hole].mean(axis=0)
        diff = row_mean - guide.row_means[i]
        per_row[i] = np.sum(diff ** 2)
    return float(per_row.mean() / channels)


def guided_loss(x: np.ndarray, x0: np.ndarray, mask: Mask, guide: GuideSpec,
                lam: float) -> float:
    """Data term plus the weighted guide term."""
    return dip_loss(x, x0, mask) + lam * guide_term(x, mask, guide)
