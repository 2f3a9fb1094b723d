"""Differentiable grid sampling and displacement-field algebra.

All functions operate on torch tensors:

* volumes are ``(D, H, W)``,
* flows and sample grids are ``(3, D, H, W)`` with channel order ``(z, y, x)``
  and values in absolute voxel coordinates (grids) or voxel displacements
  (flows).

Warping is backward: output voxel ``x`` takes its value from the input
interpolated at ``x + u(x)``. Images are sampled with zeros padding (counts
leaving the field of view vanish); coordinate grids with border clamping
(cycling must not invent coordinates outside the lattice).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DimensionError, NumericalError


def base_grid(shape, dtype=torch.float32, device=None) -> torch.Tensor:
    """Integer lattice G0 with G0[c, z, y, x] = (z, y, x)[c]."""
    if any(int(s) <= 0 for s in shape):
        raise DimensionError(f"shape must be positive, got {tuple(shape)}")
    axes = [torch.arange(int(s), dtype=dtype, device=device) for s in shape]
    return torch.stack(torch.meshgrid(*axes, indexing="ij"), dim=0)


def grid_sample(vol: torch.Tensor, grid: torch.Tensor, padding: str = "zeros") -> torch.Tensor:
    """Trilinear lookup of ``vol`` at the voxel coordinates in ``grid``.

    ``vol`` may be (D,H,W) or (C,D,H,W); the grid's spatial shape must match.
    Differentiable with respect to both the volume values and the grid. At
    exact lattice coordinates the result is bit-identical to the input.
    """
    if padding not in ("zeros", "border"):
        raise ValueError(f"unknown padding {padding!r}")
    squeeze = vol.dim() == 3
    v = vol.unsqueeze(0) if squeeze else vol
    if v.dim() != 4:
        raise DimensionError(f"volume must be (D,H,W) or (C,D,H,W), got {tuple(vol.shape)}")
    if grid.shape != (3,) + v.shape[1:]:
        raise DimensionError(f"grid shape {tuple(grid.shape)} does not match volume {tuple(vol.shape)}")
    if not torch.all(torch.isfinite(grid)):
        raise NumericalError("sample grid contains non-finite coordinates")

    c = v.shape[0]
    d, h, w = v.shape[1:]
    gz, gy, gx = grid[0].reshape(-1), grid[1].reshape(-1), grid[2].reshape(-1)
    if padding == "border":
        gz = gz.clamp(0, d - 1)
        gy = gy.clamp(0, h - 1)
        gx = gx.clamp(0, w - 1)
    z0, y0, x0 = gz.floor(), gy.floor(), gx.floor()
    tz, ty, tx = gz - z0, gy - y0, gx - x0
    z0, y0, x0 = z0.long(), y0.long(), x0.long()

    # one gather over all 8 corners, weights factored per axis
    corners = torch.tensor([(dz, dy, dx) for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)],
                           device=grid.device)
    zi = z0.unsqueeze(0) + corners[:, 0:1]
    yi = y0.unsqueeze(0) + corners[:, 1:2]
    xi = x0.unsqueeze(0) + corners[:, 2:3]
    wz = torch.stack([1.0 - tz, tz])[corners[:, 0]]
    wy = torch.stack([1.0 - ty, ty])[corners[:, 1]]
    wx = torch.stack([1.0 - tx, tx])[corners[:, 2]]
    weight = wz * wy * wx  # (8, N)
    if padding == "zeros":
        inside = ((zi >= 0) & (zi < d) & (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w))
        weight = weight * inside
    idx = ((zi.clamp(0, d - 1) * h + yi.clamp(0, h - 1)) * w + xi.clamp(0, w - 1)).reshape(-1)
    vals = v.reshape(c, -1).index_select(1, idx).reshape(c, 8, -1)
    out = (vals * weight.unsqueeze(0)).sum(dim=1).reshape((c,) + grid.shape[1:])
    return out[0] if squeeze else out


def warp_with_flow(vol: torch.Tensor, flow: torch.Tensor, padding: str = "zeros") -> torch.Tensor:
    """Backward-warp ``vol`` by displacement ``flow``: out(x) = vol(x + u(x))."""
    spatial = vol.shape[-3:]
    if flow.shape != (3,) + tuple(spatial):
        raise DimensionError(f"flow shape {tuple(flow.shape)} does not match volume {tuple(vol.shape)}")
    grid = base_grid(spatial, dtype=flow.dtype, device=flow.device) + flow
    return grid_sample(vol, grid, padding=padding)


def cycle_grid(u_fwd: torch.Tensor, u_bwd: torch.Tensor) -> torch.Tensor:
    """Sample G_fwd = G0 + u_fwd at the locations G_bwd = G0 + u_bwd.

    Returns G0 exactly when the two flows are mutual inverses (away from the
    border band, which is clamped).
    """
    if u_fwd.shape != u_bwd.shape:
        raise DimensionError(f"flow shapes differ: {tuple(u_fwd.shape)} vs {tuple(u_bwd.shape)}")
    g0 = base_grid(u_fwd.shape[1:], dtype=u_fwd.dtype, device=u_fwd.device)
    return grid_sample(g0 + u_fwd, g0 + u_bwd, padding="border")


def compose_flow(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Displacement w(x) = u(x) + v(x + u(x)), v sampled with border clamping.

    Warping once with w matches warping with v and then with u, up to the
    extra interpolation error of the two-step path (exact for volumes that
    trilinear interpolation reproduces).
    """
    g0 = base_grid(u.shape[1:], dtype=u.dtype, device=u.device)
    return u + grid_sample(v, g0 + u, padding="border")


def invert_flow(u: torch.Tensor, max_iters: int = 50, tol: float = 1e-3) -> torch.Tensor:
    """Fixed-point inverse displacement: v with v(x) = -u(x + v(x)).

    Converges for smooth fields whose map x -> x + u(x) is a bijection
    (Lipschitz constant of u below 1). Raises when the max update does not
    drop below ``tol`` voxels within ``max_iters``.
    """
    g0 = base_grid(u.shape[1:], dtype=u.dtype, device=u.device)
    with torch.no_grad():
        v = -u
        for _ in range(max_iters):
            v_new = -grid_sample(u, g0 + v, padding="border")
            delta = (v_new - v).abs().max().item()
            v = v_new
            if delta < tol:
                return v
    raise NumericalError(f"flow inversion did not converge: last update {delta:.3e} voxels "
                         f"after {max_iters} iterations (tol {tol:.1e})")


def flow_voxel_to_mm(u: torch.Tensor | np.ndarray, spacing_mm) -> torch.Tensor | np.ndarray:
    """Componentwise voxel -> mm conversion, spacing ordered (z, y, x)."""
    if isinstance(u, torch.Tensor):
        sp = torch.as_tensor(spacing_mm, dtype=u.dtype, device=u.device).view(3, 1, 1, 1)
    else:
        sp = np.asarray(spacing_mm, dtype=u.dtype).reshape(3, 1, 1, 1)
    return u * sp


def flow_mm_to_voxel(u: torch.Tensor | np.ndarray, spacing_mm) -> torch.Tensor | np.ndarray:
    """Componentwise mm -> voxel conversion, spacing ordered (z, y, x)."""
    if isinstance(u, torch.Tensor):
        sp = torch.as_tensor(spacing_mm, dtype=u.dtype, device=u.device).view(3, 1, 1, 1)
    else:
        sp = np.asarray(spacing_mm, dtype=u.dtype).reshape(3, 1, 1, 1)
    return u / sp
