"""3D encoder-decoder network predicting displacement fields at every scale.

Two volumes enter as a 2-channel input. Each downsampling block is a
stride-2 then stride-1 pair of 3x3x3 convolutions with ReLU; the decoder
upsamples with 4x4x4 stride-2 transposed convolutions. At every resolution a
5x5x5 flow head consumes the matching encoder features, the decoder features
and the upsampled coarser flow, emitting a (z, y, x) displacement in that
resolution's voxel units. Flow heads are zero-initialized so an untrained
network predicts the identity warp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError


@dataclass
class ModelConfig:
    levels: int = 3
    encoder_channels: tuple[int, ...] = (16, 32, 64)
    in_channels: int = 2
    flow_channels: int = 3

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        if self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")
        if len(self.encoder_channels) != self.levels:
            raise ConfigurationError(
                f"need {self.levels} channel counts, got {len(self.encoder_channels)}")

    @property
    def decoder_channels(self) -> tuple[int, ...]:
        """Feature channels at resolutions full..coarsest (index = level)."""
        ch = self.encoder_channels
        return (max(ch[0] // 2, 1),) + ch[: self.levels - 1] + (ch[-1],)

    def skip_channels(self, level: int) -> int:
        return self.in_channels if level == 0 else self.encoder_channels[level - 1]


@dataclass
class MultiScaleFlows:
    """Predicted flows from coarsest to full resolution (levels + 1 entries).

    Entry k has spatial shape input_shape / 2^(levels - k); values are in
    that resolution's voxel units.
    """

    flows: list[torch.Tensor]

    @property
    def finest(self) -> torch.Tensor:
        return self.flows[-1]


class FlowNetwork(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        ch = cfg.encoder_channels
        dec = cfg.decoder_channels

        downs = []
        in_ch = cfg.in_channels
        for c in ch:
            downs.append(nn.Conv3d(in_ch, c, 3, stride=2, padding=1))
            downs.append(nn.Conv3d(c, c, 3, stride=1, padding=1))
            in_ch = c
        self.downs = nn.ModuleList(downs)

        # up[k] maps decoder features at level k+1 to level k
        self.ups = nn.ModuleList(
            nn.ConvTranspose3d(dec[k + 1], dec[k], 4, stride=2, padding=1)
            for k in range(cfg.levels)
        )
        heads = [nn.Conv3d(dec[cfg.levels], cfg.flow_channels, 5, padding=2)]
        for k in range(cfg.levels - 1, -1, -1):
            heads.append(nn.Conv3d(cfg.skip_channels(k) + dec[k] + cfg.flow_channels,
                                   cfg.flow_channels, 5, padding=2))
        self.heads = nn.ModuleList(heads)  # coarsest first

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Batched pass: (N, 2, D, H, W) -> flows coarsest..full, each (N, 3, ...)."""
        cfg = self.config
        if x.dim() != 5 or x.shape[1] != cfg.in_channels:
            raise DimensionError(f"expected (N, {cfg.in_channels}, D, H, W), got {tuple(x.shape)}")
        m = 2 ** cfg.levels
        if any(s % m for s in x.shape[2:]):
            raise DimensionError(
                f"spatial shape {tuple(x.shape[2:])} not a multiple of {m}; pad_to_multiple first")

        skips = [x]
        h = x
        for i in range(cfg.levels):
            h = F.relu(self.downs[2 * i](h))
            h = F.relu(self.downs[2 * i + 1](h))
            skips.append(h)

        flows = [self.heads[0](h)]
        for k in range(cfg.levels - 1, -1, -1):
            h = F.relu(self.ups[k](h))
            up_flow = 2.0 * F.interpolate(flows[-1], scale_factor=2,
                                          mode="trilinear", align_corners=False)
            flows.append(self.heads[cfg.levels - k](torch.cat([skips[k], h, up_flow], dim=1)))
        return flows

    def estimate(self, frame_a: torch.Tensor, frame_b: torch.Tensor) -> MultiScaleFlows:
        """Flows aligning ``frame_a`` toward ``frame_b`` (single pair)."""
        if frame_a.shape != frame_b.shape:
            raise DimensionError(f"frame shapes differ: {tuple(frame_a.shape)} vs {tuple(frame_b.shape)}")
        x = torch.stack([frame_a, frame_b]).unsqueeze(0)
        return MultiScaleFlows([f[0] for f in self.forward(x)])

    def estimate_pair(self, frame_a: torch.Tensor, frame_b: torch.Tensor
                      ) -> tuple[MultiScaleFlows, MultiScaleFlows]:
        """Forward and backward flows in one batched pass."""
        x = torch.stack([torch.stack([frame_a, frame_b]), torch.stack([frame_b, frame_a])])
        flows = self.forward(x)
        return (MultiScaleFlows([f[0] for f in flows]),
                MultiScaleFlows([f[1] for f in flows]))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_network(config: ModelConfig | None = None, seed: int = 0) -> FlowNetwork:
    """Build a network with fan-in-scaled hidden weights and zero flow heads.

    Zero heads make every initial flow prediction exactly zero, so training
    starts from the identity warp. Deterministic for a given seed.
    """
    net = FlowNetwork(config)
    gen = torch.Generator().manual_seed(seed)
    for module in list(net.downs) + list(net.ups):
        fan_in = module.in_channels * math.prod(module.kernel_size)
        std = math.sqrt(2.0 / fan_in)
        with torch.no_grad():
            module.weight.copy_(torch.randn(module.weight.shape, generator=gen) * std)
            module.bias.zero_()
    for head in net.heads:
        with torch.no_grad():
            head.weight.zero_()
            head.bias.zero_()
    return net


@dataclass
class PadRecord:
    orig_shape: tuple[int, int, int]
    before: tuple[int, int, int]
    after: tuple[int, int, int]


def pad_to_multiple(vol: torch.Tensor, multiple: int) -> tuple[torch.Tensor, PadRecord]:
    """Symmetric zero-padding of the trailing 3 dims up to the next multiple."""
    spatial = tuple(vol.shape[-3:])
    target = tuple(-(-s // multiple) * multiple for s in spatial)
    before = tuple((t - s) // 2 for t, s in zip(target, spatial))
    after = tuple(t - s - b for t, s, b in zip(target, spatial, before))
    pad = []
    for b, a in zip(reversed(before), reversed(after)):
        pad.extend([b, a])
    record = PadRecord(spatial, before, after)
    if all(b == 0 and a == 0 for b, a in zip(before, after)):
        return vol, record
    return F.pad(vol, pad), record


def crop_to_record(t: torch.Tensor, record: PadRecord) -> torch.Tensor:
    """Undo pad_to_multiple on the trailing 3 dims (full-resolution shape)."""
    sl = tuple(slice(b, b + s) for b, s in zip(record.before, record.orig_shape))
    return t[(..., *sl)]
