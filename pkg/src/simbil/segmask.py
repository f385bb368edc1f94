"""Binary masks, morphology, and segmentation backends.

Mask convention everywhere: 1 = known pixel, 0 = hole. Instance candidates
follow the same convention, so a candidate's mask can be used directly as a
removal mask (object pixels are the 0-set).
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InstanceNotFoundError, MaskError, SegmentationError

Bbox = tuple[float, float, float, float]


@dataclass(frozen=True)
class Mask:
    """Binary image grid; value 1 marks known pixels, 0 marks the hole."""

    width: int
    height: int
    data: np.ndarray  # uint8 (height, width), values in {0, 1}

    @staticmethod
    def from_array(data: np.ndarray) -> "Mask":
        data = np.asarray(data)
        if data.ndim != 2:
            raise MaskError(f"mask must be 2-D, got shape {data.shape}")
        uniq = np.unique(data)
        if not np.all(np.isin(uniq, (0, 1))):
            raise MaskError(f"mask values must be binary, got {uniq[:8]}")
        h, w = data.shape
        return Mask(width=w, height=h, data=data.astype(np.uint8))

    @staticmethod
    def all_known(width: int, height: int) -> "Mask":
        return Mask(width=width, height=height,
                    data=np.ones((height, width), dtype=np.uint8))

    def hole_count(self) -> int:
        return int((self.data == 0).sum())

    def hole_bbox_pixels(self) -> tuple[int, int, int, int] | None:
        """Tight pixel bbox (x0, y0, x1, y1), half-open, of the hole; None if empty."""
        ys, xs = np.nonzero(self.data == 0)
        if ys.size == 0:
            return None
        return (int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)

    def invert(self) -> "Mask":
        return Mask(self.width, self.height, (1 - self.data).astype(np.uint8))

    def to_image_array(self) -> np.ndarray:
        """255 = known, 0 = hole (the on-disk encoding)."""
        return (self.data * 255).astype(np.uint8)

    @staticmethod
    def from_image_array(arr: np.ndarray) -> "Mask":
        return Mask.from_array((np.asarray(arr) >= 128).astype(np.uint8))


@dataclass(frozen=True)
class InstanceCandidate:
    """One segmentation proposal; mask 0-set marks the instance pixels."""

    category: str
    score: float
    bbox: Bbox
    mask: Mask


# ---------------------------------------------------------------------------
# Morphology. Square structuring element of half-width ``radius`` (a Chebyshev
# ball), realized with rank filters: growing the 0-set is a minimum filter,
# shrinking it a maximum filter. 'nearest' border handling equals clipping the
# element to the image.


def dilate_hole(mask: Mask, radius: int) -> Mask:
    """Grow the hole by ``radius`` pixels in Chebyshev distance."""
    if radius < 0:
        raise MaskError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask
    out = ndimage.minimum_filter(mask.data, size=2 * radius + 1, mode="nearest")
    return Mask(mask.width, mask.height, out.astype(np.uint8))


def erode_foreground(mask: Mask, radius: int) -> Mask:
    """Shrink the hole (the foreground 0-set) by ``radius`` pixels."""
    if radius < 0:
        raise MaskError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask
    out = ndimage.maximum_filter(mask.data, size=2 * radius + 1, mode="nearest")
    return Mask(mask.width, mask.height, out.astype(np.uint8))


def default_dilation_radius(width: int, height: int) -> int:
    """3 px at a 64 px image side, scaled linearly with resolution."""
    return max(1, round(3 * min(width, height) / 64))


def bbox_to_pixels(bbox: Bbox, width: int, height: int) -> tuple[int, int, int, int]:
    """Half-open pixel rect of a normalized bbox.

    Pixel (i, j) is inside iff its center falls in
    [x_min*W, x_max*W) x [y_min*H, y_max*H).
    """
    x0, y0, x1, y1 = bbox
    # center j + 0.5 >= x0*W  <=>  j >= x0*W - 0.5  <=>  j0 = ceil(x0*W - 0.5)
    j0 = int(np.ceil(x0 * width - 0.5))
    j1 = int(np.ceil(x1 * width - 0.5))
    i0 = int(np.ceil(y0 * height - 0.5))
    i1 = int(np.ceil(y1 * height - 0.5))
    j0, j1 = max(0, j0), min(width, j1)
    i0, i1 = max(0, i0), min(height, i1)
    return (j0, i0, j1, i1)


def pixels_to_bbox(rect: tuple[int, int, int, int], width: int, height: int) -> Bbox:
    x0, y0, x1, y1 = rect
    return (x0 / width, y0 / height, x1 / width, y1 / height)


def mask_from_bbox(bbox: Bbox, width: int, height: int) -> Mask:
    """Fallback removal mask: the hole is the rasterized bbox interior."""
    x0, y0, x1, y1 = bbox
    if x1 <= x0 or y1 <= y0:
        raise MaskError(f"zero-area bbox {bbox}")
    j0, i0, j1, i1 = bbox_to_pixels(bbox, width, height)
    if j1 <= j0 or i1 <= i0:
        raise MaskError(f"bbox {bbox} rasterizes to an empty pixel set "
                        f"at {width}x{height}")
    data = np.ones((height, width), dtype=np.uint8)
    data[i0:i1, j0:j1] = 0
    return Mask(width=width, height=height, data=data)


def bbox_iou(a: Bbox, b: Bbox) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix1 - ix0), max(0.0, iy1 - iy0)
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def bbox_union(a: Bbox, b: Bbox) -> Bbox:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def clip_bbox(b: Bbox) -> Bbox:
    return (min(max(b[0], 0.0), 1.0), min(max(b[1], 0.0), 1.0),
            min(max(b[2], 0.0), 1.0), min(max(b[3], 0.0), 1.0))


# ---------------------------------------------------------------------------
# Instance selection


def select_instance(candidates: list[InstanceCandidate], category: str,
                    bbox_hint: Bbox) -> InstanceCandidate:
    """Pick the matching-category candidate maximizing IoU with the hint.

    Ties break by higher score, then by lexicographically smallest serialized
    bbox, so the choice is total and deterministic.
    """
    if not candidates:
        raise SegmentationError("empty candidate list")
    matching = [c for c in candidates if c.category == category]
    if not matching:
        raise InstanceNotFoundError(category, candidates)

    def sort_key(c: InstanceCandidate):
        return (-bbox_iou(c.bbox, bbox_hint), -c.score, json.dumps(list(c.bbox)))

    return min(matching, key=sort_key)


# ---------------------------------------------------------------------------
# Backends


class SyntheticOracleBackend:
    """Exact segmentation for flat-background synthetic scenes.

    Finds the dominant non-background color inside the bbox hint, thresholds
    on it, and keeps the largest connected component. Background is estimated
    as the most frequent color of the whole image (flat backgrounds dominate).
    """

    def __init__(self, color_tolerance: float = 0.06):
        self.color_tolerance = color_tolerance

    def candidates(self, image: np.ndarray, category: str,
                   bbox_hint: Bbox) -> list[InstanceCandidate]:
        h, w = image.shape[:2]
        img = image if image.ndim == 3 else image[:, :, None]
        quant = np.round(img * 255).astype(np.int32)
        flat = quant.reshape(-1, quant.shape[2])
        colors, counts = np.unique(flat, axis=0, return_counts=True)
        background = colors[counts.argmax()]

        j0, i0, j1, i1 = bbox_to_pixels(bbox_hint, w, h)
        if j1 <= j0 or i1 <= i0:
            return []
        window = quant[i0:i1, j0:j1]
        win_flat = window.reshape(-1, window.shape[2])
        non_bg = ~np.all(win_flat == background, axis=1)
        if not non_bg.any():
            return []
        obj_colors, obj_counts = np.unique(win_flat[non_bg], axis=0,
                                           return_counts=True)
        target_color = obj_colors[obj_counts.argmax()]

        tol = self.color_tolerance * 255
        close = np.all(np.abs(quant.astype(np.float64) - target_color) <= tol,
                       axis=2)
        inside = np.zeros((h, w), dtype=bool)
        inside[i0:i1, j0:j1] = True
        fg = close & inside
        labels, n = ndimage.label(fg)
        if n == 0:
            return []
        sizes = ndimage.sum_labels(np.ones_like(labels), labels,
                                   index=range(1, n + 1))
        keep = int(np.argmax(sizes)) + 1
        component = labels == keep
        mask = Mask.from_array((~component).astype(np.uint8))
        ys, xs = np.nonzero(component)
        bbox = (xs.min() / w, ys.min() / h, (xs.max() + 1) / w, (ys.max() + 1) / h)
        area = (j1 - j0) * (i1 - i0)
        score = float(min(1.0, component.sum() / max(1, area)))
        return [InstanceCandidate(category=category, score=score,
                                  bbox=tuple(float(v) for v in bbox), mask=mask)]


class HttpSegmentationBackend:
    """Client for an external segmentation service.

    Wire contract: POST {image: b64 PNG, category, bbox_hint} to the endpoint;
    response {candidates: [{category, score, bbox, mask: b64 PNG}]}. The
    service is expected to be stateless per request.
    """

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def candidates(self, image: np.ndarray, category: str,
                   bbox_hint: Bbox) -> list[InstanceCandidate]:
        import httpx

        from .imageio import encode_png

        payload = {
            "image": base64.b64encode(encode_png(image)).decode("ascii"),
            "category": category,
            "bbox_hint": list(bbox_hint),
        }
        try:
            resp = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
        except Exception as exc:
            raise SegmentationError(
                f"segmentation backend unreachable at {self.endpoint}: {exc}"
            ) from exc
        body = resp.json()
        out = []
        for cand in body.get("candidates", []):
            mask_bytes = base64.b64decode(cand["mask"])
            from PIL import Image

            arr = np.asarray(Image.open(io.BytesIO(mask_bytes)).convert("L"))
            out.append(InstanceCandidate(
                category=cand["category"],
                score=float(cand["score"]),
                bbox=tuple(float(v) for v in cand["bbox"]),
                mask=Mask.from_image_array(arr),
            ))
        return out


def segment(image: np.ndarray, category: str, bbox_hint: Bbox,
            backend) -> InstanceCandidate:
    """Run the backend and pick the best candidate for the hint."""
    candidates = backend.candidates(image, category, bbox_hint)
    if not candidates:
        raise InstanceNotFoundError(category, [])
    return select_instance(candidates, category, bbox_hint)
