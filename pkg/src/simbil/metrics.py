"""Reconstruction metrics: mean absolute error and SSIM, whole-image or
restricted to a region of interest.

Both metrics are reported x100 on [0, 1] images. SSIM uses the canonical
parameterization (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
dynamic range 1.0) with windows fully inside the evaluated region, recorded
in every report for comparability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import MetricsError
from .segmask import Bbox, bbox_to_pixels, clip_bbox

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 1.0


@dataclass(frozen=True)
class RegionOfInterest:
    """The modified area of an edit: union of removed and pasted bboxes."""

    bbox: Bbox
    derivation: str = ""


@dataclass
class MetricsReport:
    mae_all: float
    ssim_all: float
    mae_roi: float
    ssim_roi: float
    resolution: int
    roi: RegionOfInterest

    def to_dict(self) -> dict:
        return {
            "mae_all": self.mae_all,
            "ssim_all": self.ssim_all,
            "mae_roi": self.mae_roi,
            "ssim_roi": self.ssim_roi,
            "resolution": self.resolution,
            "roi": {"bbox": list(self.roi.bbox), "derivation": self.roi.derivation},
            "ssim_params": {"window": SSIM_WINDOW, "sigma": SSIM_SIGMA,
                            "k1": SSIM_K1, "k2": SSIM_K2},
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricsError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if a.ndim != 3:
        raise MetricsError(f"expected 2-D or 3-D images, got shape {a.shape}")
    return a, b


def _crop_region(a: np.ndarray, b: np.ndarray, region: Bbox | None):
    if region is None:
        return a, b
    h, w = a.shape[:2]
    x0, y0, x1, y1 = bbox_to_pixels(clip_bbox(region), w, h)
    if x1 <= x0 or y1 <= y0:
        raise MetricsError(f"region {region} rasterizes to an empty pixel set")
    return a[y0:y1, x0:x1], b[y0:y1, x0:x1]


def mae(a: np.ndarray, b: np.ndarray, region: Bbox | None = None) -> float:
    """Mean absolute per-pixel difference over the region, x100."""
    a, b = _check_pair(a, b)
    a, b = _crop_region(a, b, region)
    return float(np.mean(np.abs(a - b)) * 100.0)


def _gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local means; callers slice to the valid interior."""
    out = ndimage.correlate1d(img, kernel, axis=0, mode="constant")
    return ndimage.correlate1d(out, kernel, axis=1, mode="constant")


def ssim(a: np.ndarray, b: np.ndarray, region: Bbox | None = None) -> float:
    """Mean local SSIM over windows fully inside the region, x100."""
    a, b = _check_pair(a, b)
    a, b = _crop_region(a, b, region)
    h, w = a.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise MetricsError(
            f"region {w}x{h} is smaller than the {SSIM_WINDOW}px SSIM window")

    kernel = _gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)
    pad = SSIM_WINDOW // 2
    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2

    values = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mu_x = _windowed_mean(x, kernel)
        mu_y = _windowed_mean(y, kernel)
        var_x = _windowed_mean(x * x, kernel) - mu_x ** 2
        var_y = _windowed_mean(y * y, kernel) - mu_y ** 2
        cov = _windowed_mean(x * y, kernel) - mu_x * mu_y
        ssim_map = (((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                    / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))
        values.append(float(np.mean(ssim_map[pad:h - pad, pad:w - pad])))
    return float(np.mean(values) * 100.0)


def report(before: np.ndarray, after: np.ndarray, roi: RegionOfInterest,
           reference: np.ndarray | None = None) -> MetricsReport:
    """All four numbers: vs. the reference when given, else vs. before."""
    target = reference if reference is not None else before
    target, after = _check_pair(target, after)
    clipped = clip_bbox(roi.bbox)
    resolution = max(after.shape[0], after.shape[1])
    return MetricsReport(
        mae_all=mae(target, after),
        ssim_all=ssim(target, after),
        mae_roi=mae(target, after, region=clipped),
        ssim_roi=ssim(target, after, region=clipped),
        resolution=resolution,
        roi=RegionOfInterest(bbox=clipped, derivation=roi.derivation),
    )
