"""Unsupervised training objective.

The loss compares the warped input frame against the target frame with a
Charbonnier penalty after Gaussian pre-blurring, and adds a grid-cycling
penalty that forces the forward and backward flows to be mutual inverses.
Both terms are differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError
from .volumes import DEFAULT_SPACING_MM
from . import warp


@dataclass
class LossConfig:
    alpha: float = 0.3
    epsilon: float = 1e-9
    lambda_inv: float = 1100.0
    blur_kernel_voxels: tuple[int, int, int] = (15, 15, 15)
    blur_sigma_mm: tuple[float, float, float] = (1.6, 3.2, 3.2)
    scale_weights: list[float] | None = None  # None -> 1.0 per scale

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.lambda_inv < 0.0:
            raise ConfigurationError(f"lambda_inv must be >= 0, got {self.lambda_inv}")
        if any(k % 2 == 0 or k < 1 for k in self.blur_kernel_voxels):
            raise ConfigurationError(f"blur kernel must be odd in every axis, got {self.blur_kernel_voxels}")

    def weight(self, k: int) -> float:
        return 1.0 if self.scale_weights is None else float(self.scale_weights[k])


@dataclass
class LossValues:
    photometric: float
    invertibility: float
    total: float
    per_scale: list[float] = field(default_factory=list)


def _gauss_kernel(size: int, sigma_voxels: float, dtype, device) -> torch.Tensor:
    x = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2
    if sigma_voxels <= 0:
        k = (x == 0).to(dtype)
    else:
        k = torch.exp(-0.5 * (x / sigma_voxels) ** 2)
    return k / k.sum()  # renormalized after truncation to the window


def gaussian_blur3d(vol: torch.Tensor, config: LossConfig,
                    spacing_mm=DEFAULT_SPACING_MM) -> torch.Tensor:
    """Separable Gaussian blur with per-axis sigma = sigma_mm / spacing_mm.

    The kernel is truncated to the configured window and renormalized to sum
    to one; boundaries are handled by reflection so body edges are not
    darkened.
    """
    if vol.dim() != 3:
        raise DimensionError(f"expected (D,H,W) volume, got {tuple(vol.shape)}")
    sizes = config.blur_kernel_voxels
    if any(k % 2 == 0 for k in sizes):
        raise ConfigurationError(f"blur kernel must be odd, got {sizes}")
    out = vol.unsqueeze(0).unsqueeze(0)
    for axis in range(3):
        size = int(sizes[axis])
        if size // 2 >= vol.shape[axis]:  # reflect padding needs pad < dim
            raise DimensionError(f"blur kernel {size} too large for axis of length {vol.shape[axis]}")
        sigma_vox = float(config.blur_sigma_mm[axis]) / float(spacing_mm[axis])
        k = _gauss_kernel(size, sigma_vox, vol.dtype, vol.device)
        shape = [1, 1, 1, 1, 1]
        shape[2 + axis] = size
        pad = [0, 0, 0, 0, 0, 0]
        pad[2 * (2 - axis)] = pad[2 * (2 - axis) + 1] = size // 2
        out = F.conv3d(F.pad(out, pad, mode="reflect"), k.view(shape))
    return out[0, 0]


def photometric_loss(shifted: torch.Tensor, target: torch.Tensor, config: LossConfig) -> torch.Tensor:
    """Charbonnier penalty (1/N) sum ((shifted - target)^2 + eps^2)^alpha."""
    if shifted.shape != target.shape:
        raise DimensionError(f"shape mismatch: {tuple(shifted.shape)} vs {tuple(target.shape)}")
    return (((shifted - target) ** 2 + config.epsilon ** 2) ** config.alpha).mean()


def invertibility_loss(u_fwd: torch.Tensor, u_bwd: torch.Tensor) -> torch.Tensor:
    """Mean squared deviation of the cycled grid from the base grid.

    (1/(3N)) sum over voxels and the three coordinates of (G_cyc - G0)^2;
    zero iff cycling returns every pixel location to where it started.
    """
    g_cyc = warp.cycle_grid(u_fwd, u_bwd)
    g0 = warp.base_grid(u_fwd.shape[1:], dtype=u_fwd.dtype, device=u_fwd.device)
    return ((g_cyc - g0) ** 2).mean()


def _pool_to(vol: torch.Tensor, shape) -> torch.Tensor:
    if tuple(vol.shape) == tuple(shape):
        return vol
    factors = tuple(int(v // s) for v, s in zip(vol.shape, shape))
    if any(f * s != v for f, s, v in zip(factors, shape, vol.shape)):
        raise DimensionError(f"cannot pool {tuple(vol.shape)} to {tuple(shape)}")
    return F.avg_pool3d(vol.unsqueeze(0).unsqueeze(0), kernel_size=factors, stride=factors)[0, 0]


def total_loss(flows_fwd, flows_bwd, frame_a: torch.Tensor, frame_b: torch.Tensor,
               config: LossConfig, spacing_mm=DEFAULT_SPACING_MM) -> tuple[torch.Tensor, LossValues]:
    """Weighted multi-scale photometric term plus the invertibility term.

    ``flows_fwd``/``flows_bwd`` are the per-resolution flow lists (coarsest
    first) predicted for the pair (a, b) and (b, a). Frames are blurred once
    at full resolution, average-pooled to each flow's resolution, and the
    pooled input is warped with the matching-scale forward flow. The
    invertibility term is evaluated on the finest flow pair only.

    Returns the differentiable total plus a float summary.
    """
    fwd = list(flows_fwd.flows) if hasattr(flows_fwd, "flows") else list(flows_fwd)
    bwd = list(flows_bwd.flows) if hasattr(flows_bwd, "flows") else list(flows_bwd)
    if len(fwd) != len(bwd):
        raise DimensionError(f"scale count mismatch: {len(fwd)} vs {len(bwd)}")
    if config.scale_weights is not None and len(config.scale_weights) != len(fwd):
        raise DimensionError(f"{len(config.scale_weights)} scale weights for {len(fwd)} scales")
    if tuple(fwd[-1].shape[1:]) != tuple(frame_a.shape):
        raise DimensionError("finest flow does not match frame resolution")

    blurred_a = gaussian_blur3d(frame_a, config, spacing_mm)
    blurred_b = gaussian_blur3d(frame_b, config, spacing_mm)

    photometric = frame_a.new_zeros(())
    per_scale = []
    for k, flow in enumerate(fwd):
        shape = flow.shape[1:]
        shifted = warp.warp_with_flow(_pool_to(blurred_a, shape), flow, padding="zeros")
        rho = photometric_loss(shifted, _pool_to(blurred_b, shape), config)
        per_scale.append(float(rho.detach()))
        photometric = photometric + config.weight(k) * rho

    inv = invertibility_loss(fwd[-1], bwd[-1])
    total = photometric + config.lambda_inv * inv
    values = LossValues(
        photometric=float(photometric.detach()),
        invertibility=float(inv.detach()),
        total=float(total.detach()),
        per_scale=per_scale,
    )
    return total, values
