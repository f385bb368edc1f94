"""Per-image optimization loop and its verification harness.

A run dilates the hole, reads background statistics, then fits the generator
so its output matches the image on known pixels (and its hole average matches
the background average when guiding is on). The optimized objective is the
per-element mean of the masked squared error plus ``lam`` times the guide
term, so ``lam`` trades the two terms independently of resolution. The final
composite keeps every known pixel bit-identical to the input; only the
dilated hole is synthesized.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import InpaintError
from ..segmask import Mask, default_dilation_radius, dilate_hole
from .losses import (
    GUIDE_MODES,
    GuideSpec,
    compute_background_average,
    default_guide_region,
    dip_loss,
    guide_term,
    guided_loss,
)
from .network import NetworkConfig, build_network

NOISE_SCALE = 0.1  # input noise sampled uniformly from [0, NOISE_SCALE]


@dataclass
class InpaintSpec:
    """All knobs for one internal-learning run."""

    iterations: int = 2000
    lam: float = 0.1
    dilation_radius: int | None = None   # None: 3 px at 64, scaled linearly
    guide_mode: str = "global"           # none | global | row_wise
    network: NetworkConfig = field(default_factory=NetworkConfig)
    noise_seed: int = 0
    learning_rate: float = 0.01
    input_noise_std: float = 0.0         # optional per-step input perturbation

    def validate(self) -> "InpaintSpec":
        if self.iterations < 1:
            raise InpaintError(f"iterations must be >= 1, got {self.iterations}")
        if self.lam < 0:
            raise InpaintError(f"lambda must be >= 0, got {self.lam}")
        if self.guide_mode not in GUIDE_MODES:
            raise InpaintError(f"guide_mode must be one of {GUIDE_MODES}, "
                               f"got {self.guide_mode!r}")
        self.network.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "lambda": self.lam,
            "dilation_radius": self.dilation_radius,
            "guide_mode": self.guide_mode,
            "network": self.network.to_dict(),
            "noise_seed": self.noise_seed,
            "learning_rate": self.learning_rate,
            "input_noise_std": self.input_noise_std,
        }

    @staticmethod
    def from_dict(doc: dict) -> "InpaintSpec":
        spec = InpaintSpec(
            iterations=int(doc.get("iterations", 2000)),
            lam=float(doc.get("lambda", 0.1)),
            dilation_radius=(None if doc.get("dilation_radius") is None
                             else int(doc["dilation_radius"])),
            guide_mode=str(doc.get("guide_mode", "global")),
            network=NetworkConfig.from_dict(doc.get("network", {})),
            noise_seed=int(doc.get("noise_seed", 0)),
            learning_rate=float(doc.get("learning_rate", 0.01)),
            input_noise_std=float(doc.get("input_noise_std", 0.0)),
        )
        return spec.validate()


@dataclass
class InpaintResult:
    image: np.ndarray
    trace: list[tuple[int, float, float, float]]  # (iter, data, guide, total)
    elapsed: float
    dilated_mask: Mask
    guide: GuideSpec | None


def write_trace_csv(path: str | Path, trace) -> None:
    lines = ["iteration,data_term,guide_term,total"]
    lines += [f"{it},{d!r},{g!r},{t!r}" for it, d, g, t in trace]
    Path(path).write_text("\n".join(lines) + "\n")


def make_noise_input(height: int, width: int, seed: int) -> np.ndarray:
    """One-channel grid, uniform in [0, NOISE_SCALE], fixed by the seed."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, NOISE_SCALE, size=(height, width))


def _guide_term_torch(out: torch.Tensor, hole: torch.Tensor,
                      guide: GuideSpec) -> torch.Tensor:
    """Differentiable mirror of losses.guide_term; out is (1, C, H, W)."""
    channels = out.shape[1]
    if guide.mode == "global":
        n = hole.sum()
        hole_mean = (out * hole).sum(dim=(0, 2, 3)) / n
        target = torch.as_tensor(guide.global_mean, dtype=out.dtype)
        return ((hole_mean - target) ** 2).sum() / channels
    rows = torch.as_tensor(np.asarray(guide.rows), dtype=torch.long)
    row_sums = (out * hole).sum(dim=3)[0]        # (C, H)
    row_counts = hole.sum(dim=3)[0, 0]           # (H,)
    means = row_sums[:, rows] / row_counts[rows]  # (C, R)
    target = torch.as_tensor(guide.row_means.T, dtype=out.dtype)
    per_row = ((means - target) ** 2).sum(dim=0)
    return per_row.mean() / channels


def _dip_term_torch(out: torch.Tensor, x0: torch.Tensor,
                    known: torch.Tensor) -> torch.Tensor:
    return (((out - x0) * known) ** 2).sum()


def inpaint(image: np.ndarray, mask: Mask, spec: InpaintSpec,
            progress=None) -> InpaintResult:
    """Run the full internal-learning procedure on one image.

    Dilates the hole, derives the guide (unless guide_mode is none), fits the
    generator for ``spec.iterations`` steps, and composites: known pixels come
    verbatim from the input, hole pixels from the generator output.

    ``progress(iteration, total_loss)`` is invoked every step when given.
    """
    spec.validate()
    start = time.monotonic()
    image = np.asarray(image, dtype=np.float64)
    single_channel = image.ndim == 2
    img = image[:, :, None] if single_channel else image
    h, w, channels = img.shape
    if (mask.height, mask.width) != (h, w):
        raise InpaintError(f"mask {mask.width}x{mask.height} does not match "
                           f"image {w}x{h}")

    radius = (spec.dilation_radius if spec.dilation_radius is not None
              else default_dilation_radius(w, h))
    dilated = dilate_hole(mask, radius)

    if dilated.hole_count() == 0:
        result = image.copy()
        return InpaintResult(image=result, trace=[], elapsed=0.0,
                             dilated_mask=dilated, guide=None)

    guide = None
    if spec.guide_mode != "none":
        guide = compute_background_average(
            img, dilated, default_guide_region(dilated), mode=spec.guide_mode)

    spec.network.check_image_size(h, w)
    net = build_network(spec.network, seed=spec.noise_seed, in_channels=1,
                        out_channels=channels)
    z_np = make_noise_input(h, w, spec.noise_seed)
    z_base = torch.as_tensor(z_np, dtype=torch.float32)[None, None]
    x0 = torch.as_tensor(img.transpose(2, 0, 1), dtype=torch.float32)[None]
    known = torch.as_tensor(dilated.data, dtype=torch.float32)[None, None]
    hole = 1.0 - known

    perturb_rng = np.random.default_rng(spec.noise_seed + 1)
    use_guide = guide is not None and spec.lam != 0.0
    optimizer = torch.optim.Adam(net.parameters(), lr=spec.learning_rate)
    trace: list[tuple[int, float, float, float]] = []

    for it in range(1, spec.iterations + 1):
        z = z_base
        if spec.input_noise_std > 0:
            jitter = perturb_rng.normal(0.0, spec.input_noise_std,
                                        size=(h, w)).astype(np.float32)
            z = z_base + torch.as_tensor(jitter)[None, None]
        optimizer.zero_grad()
        out = net(z)
        # The optimized data term is the per-element mean (MSELoss semantics):
        # the guide weight only has a resolution-independent meaning against
        # a normalized data term.
        data = _dip_term_torch(out, x0, known) / out.numel()
        if use_guide:
            loss = data + spec.lam * _guide_term_torch(out, hole, guide)
        else:
            loss = data
        if not torch.isfinite(loss):
            raise InpaintError(
                f"non-finite loss at iteration {it}; last trace rows: "
                f"{trace[-3:]}")
        loss.backward()
        optimizer.step()

        with torch.no_grad():
            g_val = (float(_guide_term_torch(out.detach(), hole, guide))
                     if guide is not None else 0.0)
        d_val = float(data.detach())
        trace.append((it, d_val, g_val, d_val + spec.lam * g_val))
        if progress is not None:
            progress(it, trace[-1][3])

    with torch.no_grad():
        out = net(z_base)
    synthesized = out[0].numpy().astype(np.float64).transpose(1, 2, 0)
    known_np = dilated.data.astype(bool)[:, :, None]
    composite = np.where(known_np, img, synthesized)
    if single_channel:
        composite = composite[:, :, 0]
    return InpaintResult(image=composite, trace=trace,
                         elapsed=time.monotonic() - start,
                         dilated_mask=dilated, guide=guide)


def gradcheck(loss: str, image: np.ndarray, mask: Mask,
              guide_mode: str = "global", lam: float = 0.1,
              step: float = 1e-4) -> float:
    """Max relative error between the analytic gradient of the loss w.r.t. x
    and central finite differences of the reference implementation.

    ``loss`` is 'dip' or 'guided'. Meant for tiny instances (<= 8x8). Both
    losses are quadratic in x, so central differences carry no truncation
    error and the step only trades against rounding noise.
    """
    image = np.asarray(image, dtype=np.float64)
    img = image[:, :, None] if image.ndim == 2 else image
    h, w, channels = img.shape
    guide = None
    if loss == "guided":
        guide = compute_background_average(
            img, mask, default_guide_region(mask), mode=guide_mode)

    def reference(x_flat: np.ndarray) -> float:
        x = x_flat.reshape(img.shape)
        if loss == "dip":
            return dip_loss(x, img, mask)
        return guided_loss(x, img, mask, guide, lam)

    rng = np.random.default_rng(7)
    x_np = rng.uniform(0.0, 1.0, size=img.shape)

    x_t = torch.as_tensor(x_np.transpose(2, 0, 1)[None], dtype=torch.float64)
    x_t.requires_grad_(True)
    x0_t = torch.as_tensor(img.transpose(2, 0, 1)[None], dtype=torch.float64)
    known = torch.as_tensor(mask.data, dtype=torch.float64)[None, None]
    total = _dip_term_torch(x_t, x0_t, known)
    if loss == "guided":
        total = total + lam * _guide_term_torch(x_t, 1.0 - known, guide)
    total.backward()
    analytic = x_t.grad[0].numpy().transpose(1, 2, 0).ravel()

    flat = x_np.ravel().copy()
    fd = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = reference(flat)
        flat[i] = orig - step
        down = reference(flat)
        flat[i] = orig
        fd[i] = (up - down) / (2 * step)

    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / scale))
