"""Convolutional encoder-decoder with skip connections.

Maps a one-channel noise grid to an image of the same spatial size, output
bounded to (0, 1) by a final sigmoid. Internally the input is padded to a
multiple of 2^depth (reflection) and the output cropped back, so any size
with min side >= 2^depth works.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import NetworkConfigError


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = 5
    channels: int = 64
    skip_channels: int = 4

    def validate(self) -> "NetworkConfig":
        if self.depth < 1:
            raise NetworkConfigError(f"depth must be >= 1, got {self.depth}")
        if self.channels < 1 or self.skip_channels < 0:
            raise NetworkConfigError(
                f"invalid channel counts: {self.channels}/{self.skip_channels}")
        return self

    def check_image_size(self, height: int, width: int) -> None:
        if 2 ** self.depth > min(height, width):
            raise NetworkConfigError(
                f"depth {self.depth} halves the grid below 1px for a "
                f"{width}x{height} image (max depth "
                f"{int(min(height, width)).bit_length() - 1})")

    def to_dict(self) -> dict:
        return {"depth": self.depth, "channels": self.channels,
                "skip_channels": self.skip_channels}

    @staticmethod
    def from_dict(doc: dict) -> "NetworkConfig":
        return NetworkConfig(
            depth=int(doc.get("depth", 5)),
            channels=int(doc.get("channels", 64)),
            skip_channels=int(doc.get("skip_channels", 4)),
        ).validate()


def _conv_block(in_ch: int, out_ch: int, kernel: int = 3,
                stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2),
        nn.BatchNorm2d(out_ch),
        nn.LeakyReLU(0.2, inplace=True),
    )


class SkipEncoderDecoder(nn.Module):
    def __init__(self, config: NetworkConfig, in_channels: int = 1,
                 out_channels: int = 3):
        super().__init__()
        config.validate()
        self.config = config
        ch, skip = config.channels, config.skip_channels

        self.encoders = nn.ModuleList()
        self.skips = nn.ModuleList()
        prev = in_channels
        for _ in range(config.depth):
            self.encoders.append(nn.Sequential(
                _conv_block(prev, ch, stride=2),
                _conv_block(ch, ch),
            ))
            self.skips.append(_conv_block(ch, skip, kernel=1))
            prev = ch

        self.decoders = nn.ModuleList()
        for _ in range(config.depth - 1):
            self.decoders.append(nn.Sequential(
                _conv_block(ch + skip, ch),
                _conv_block(ch, ch),
            ))
        self.head = nn.Conv2d(ch, out_channels, 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h, w = z.shape[-2:]
        self.config.check_image_size(h, w)
        multiple = 2 ** self.config.depth
        pad_h = (multiple - h % multiple) % multiple
        pad_w = (multiple - w % multiple) % multiple
        if pad_h or pad_w:
            z = F.pad(z, (0, pad_w, 0, pad_h), mode="reflect")

        feats = []
        x = z
        for enc in self.encoders:
            x = enc(x)
            feats.append(x)

        x = feats[-1]
        for level in range(self.config.depth - 2, -1, -1):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = torch.cat([x, self.skips[level](feats[level])], dim=1)
            x = self.decoders[self.config.depth - 2 - level](x)
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        out = torch.sigmoid(self.head(x))
        return out[..., :h, :w]


def build_network(config: NetworkConfig, seed: int, in_channels: int = 1,
                  out_channels: int = 3) -> SkipEncoderDecoder:
    """Construct the generator with parameter init fixed by ``seed``."""
    torch.manual_seed(seed)
    return SkipEncoderDecoder(config, in_channels=in_channels,
                              out_channels=out_channels)
